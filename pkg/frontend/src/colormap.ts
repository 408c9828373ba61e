/** Linear two-color ramp used for heatmap cells. The default maps a positive
 *  fraction of 0 to white and 1 to pure red; other ramps can be built by
 *  passing different endpoints. Inputs outside [0, 1] are clamped. */

export type Rgb = [number, number, number];

export interface Colormap {
  (value: number): Rgb;
}

export function makeColormap(low: Rgb, high: Rgb): Colormap {
  return (value: number): Rgb => {
    const t = value <= 0 ? 0 : value >= 1 ? 1 : value;
    return [
      Math.round(low[0] + (high[0] - low[0]) * t),
      Math.round(low[1] + (high[1] - low[1]) * t),
      Math.round(low[2] + (high[2] - low[2]) * t),
    ];
  };
}

export const whiteToRed: Colormap = makeColormap([255, 255, 255], [255, 0, 0]);

export function cssColor(rgb: Rgb): string {
  return `rgb(${rgb[0]}, ${rgb[1]}, ${rgb[2]})`;
}
