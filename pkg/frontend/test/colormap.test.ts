import { describe, expect, it } from "vitest";
import { cssColor, makeColormap, whiteToRed } from "../src/colormap.js";

describe("whiteToRed", () => {
  it("maps 0 to white", () => {
    expect(whiteToRed(0)).toEqual([255, 255, 255]);
  });

  it("maps 1 to pure red", () => {
    expect(whiteToRed(1)).toEqual([255, 0, 0]);
  });

  it("interpolates linearly in between", () => {
    expect(whiteToRed(0.5)).toEqual([255, 128, 128]);
    expect(whiteToRed(0.25)).toEqual([255, 191, 191]);
  });

  it("clamps values outside [0, 1]", () => {
    expect(whiteToRed(-0.3)).toEqual(whiteToRed(0));
    expect(whiteToRed(1.7)).toEqual(whiteToRed(1));
  });
});

describe("makeColormap", () => {
  it("supports other ramps", () => {
    const blueRamp = makeColormap([255, 255, 255], [0, 0, 255]);
    expect(blueRamp(1)).toEqual([0, 0, 255]);
    expect(blueRamp(0.5)).toEqual([128, 128, 255]);
  });
});

describe("cssColor", () => {
  it("formats an rgb() string", () => {
    expect(cssColor([255, 128, 0])).toBe("rgb(255, 128, 0)");
  });
});
