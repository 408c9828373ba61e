import { cssColor, whiteToRed, type Colormap } from "./colormap.js";
import type { AppState } from "./state.js";
import type { HeatmapResponse, MetricsResponse, RepresentativeCard } from "./types.js";

export interface Handlers {
  onSelectSlide(slideId: string): void;
  onCardClick(cluster: number): void;
}

export interface RenderOptions {
  colormap?: Colormap;
  /** base prefix for patch image urls, normally the Api base */
  urlBase?: string;
}

/** Rebuilds the whole UI from the current state. Rendering is a pure
 *  function of the state (plus the hover position inside the heatmap, which
 *  only affects the zoom pane). */
export function renderApp(
  root: HTMLElement,
  state: AppState,
  handlers: Handlers,
  options: RenderOptions = {},
): void {
  const doc = root.ownerDocument;
  const colormap = options.colormap ?? whiteToRed;
  const urlBase = options.urlBase ?? "";
  root.textContent = "";

  root.appendChild(renderHeader(doc, state, handlers));
  if (state.error !== null) {
    const banner = doc.createElement("div");
    banner.className = "error-banner";
    banner.textContent = `service error: ${state.error}`;
    root.appendChild(banner);
  }
  if (state.selected !== null) {
    root.appendChild(renderCards(doc, state.cards, state.pending, handlers, urlBase));
    root.appendChild(renderHeatmap(doc, state.heatmap, state.heatmapStale, colormap));
    root.appendChild(renderMetrics(doc, state.metrics, state.metricsError));
  }
}

function renderHeader(doc: Document, state: AppState, handlers: Handlers): HTMLElement {
  const header = doc.createElement("header");

  const title = doc.createElement("h1");
  title.textContent = "wsiclust labeling";
  header.appendChild(title);

  const picker = doc.createElement("select");
  picker.className = "slide-picker";
  const placeholder = doc.createElement("option");
  placeholder.value = "";
  placeholder.textContent = "select a slide";
  placeholder.disabled = true;
  placeholder.selected = state.selected === null;
  picker.appendChild(placeholder);
  for (const slide of state.slides) {
    const option = doc.createElement("option");
    option.value = slide.slide_id;
    option.textContent = `${slide.slide_id} (${slide.regions} regions, k=${slide.k})`;
    option.selected = slide.slide_id === state.selected;
    picker.appendChild(option);
  }
  picker.addEventListener("change", () => {
    if (picker.value !== "") {
      handlers.onSelectSlide(picker.value);
    }
  });
  header.appendChild(picker);

  const revision = doc.createElement("span");
  revision.className = "revision";
  revision.dataset.revision = String(state.revision);
  revision.textContent = `revision ${state.revision}`;
  header.appendChild(revision);

  return header;
}

function renderCards(
  doc: Document,
  cards: readonly RepresentativeCard[],
  pending: ReadonlySet<number>,
  handlers: Handlers,
  urlBase: string,
): HTMLElement {
  const section = doc.createElement("section");
  section.className = "cards";
  for (const card of cards) {
    const el = doc.createElement("div");
    el.className = `card label-${card.label}`;
    if (pending.has(card.cluster)) {
      el.className += " pending";
    }
    el.dataset.cluster = String(card.cluster);

    const img = doc.createElement("img");
    img.className = "thumb";
    img.src = urlBase + card.patch_url;
    img.alt = card.region_id;
    el.appendChild(img);

    const caption = doc.createElement("div");
    caption.className = "caption";
    caption.textContent = `cluster ${card.cluster}`;
    el.appendChild(caption);

    const label = doc.createElement("div");
    label.className = "card-label";
    label.textContent = card.label;
    el.appendChild(label);

    el.addEventListener("click", () => handlers.onCardClick(card.cluster));
    section.appendChild(el);
  }
  return section;
}

function renderHeatmap(
  doc: Document,
  heatmap: HeatmapResponse | null,
  stale: boolean,
  colormap: Colormap,
): HTMLElement {
  const section = doc.createElement("section");
  section.className = "heatmap";

  const title = doc.createElement("h2");
  title.textContent = "positive fraction";
  section.appendChild(title);

  if (stale) {
    const note = doc.createElement("div");
    note.className = "stale-note";
    note.textContent = "heatmap is stale: the last refresh failed";
    section.appendChild(note);
  }
  if (heatmap === null) {
    const empty = doc.createElement("div");
    empty.className = "placeholder";
    empty.textContent = "no heatmap yet";
    section.appendChild(empty);
    return section;
  }

  const zoom = doc.createElement("div");
  zoom.className = "zoom-pane";

  const grid = doc.createElement("div");
  grid.className = "hm-grid";
  grid.style.gridTemplateColumns = `repeat(${heatmap.cols}, 1fr)`;
  for (let row = 0; row < heatmap.rows; row += 1) {
    const values = heatmap.values[row] ?? [];
    for (let col = 0; col < heatmap.cols; col += 1) {
      const value = values[col] ?? 0;
      const cell = doc.createElement("div");
      cell.className = "hm-cell";
      cell.dataset.row = String(row);
      cell.dataset.col = String(col);
      cell.dataset.value = value.toFixed(6);
      cell.style.backgroundColor = cssColor(colormap(value));
      cell.title = `(${row}, ${col}) ${value.toFixed(3)}`;
      cell.addEventListener("mouseenter", () => {
        renderZoom(doc, zoom, heatmap, row, col, colormap);
      });
      grid.appendChild(cell);
    }
  }
  section.appendChild(grid);

  renderZoom(doc, zoom, heatmap, Math.floor(heatmap.rows / 2), Math.floor(heatmap.cols / 2), colormap);
  section.appendChild(zoom);
  return section;
}

/** Magnified 3x3 neighborhood around one grid cell, with the exact value of
 *  the focused cell printed underneath. */
function renderZoom(
  doc: Document,
  pane: HTMLElement,
  heatmap: HeatmapResponse,
  row: number,
  col: number,
  colormap: Colormap,
): void {
  pane.textContent = "";

  const grid = doc.createElement("div");
  grid.className = "zoom-grid";
  for (let dr = -1; dr <= 1; dr += 1) {
    for (let dc = -1; dc <= 1; dc += 1) {
      const r = row + dr;
      const c = col + dc;
      const cell = doc.createElement("div");
      cell.className = "zoom-cell";
      if (r >= 0 && r < heatmap.rows && c >= 0 && c < heatmap.cols) {
        const value = heatmap.values[r]?.[c] ?? 0;
        cell.style.backgroundColor = cssColor(colormap(value));
        if (dr === 0 && dc === 0) {
          cell.className += " focus";
        }
      } else {
        cell.className += " outside";
      }
      grid.appendChild(cell);
    }
  }
  pane.appendChild(grid);

  const readout = doc.createElement("div");
  readout.className = "zoom-readout";
  const value = heatmap.values[row]?.[col] ?? 0;
  readout.textContent = `cell (${row}, ${col}): ${value.toFixed(3)}`;
  pane.appendChild(readout);
}

function renderMetrics(
  doc: Document,
  metrics: MetricsResponse | null,
  metricsError: string | null,
): HTMLElement {
  const section = doc.createElement("section");
  section.className = "metrics";

  const title = doc.createElement("h2");
  title.textContent = "metrics";
  section.appendChild(title);

  const body = doc.createElement("div");
  body.className = "metrics-body";
  section.appendChild(body);

  if (metricsError === "NoGroundTruth") {
    body.className += " placeholder";
    body.textContent = "no ground truth for this slide";
    return section;
  }
  if (metricsError !== null) {
    body.className += " placeholder";
    body.textContent = `metrics unavailable: ${metricsError}`;
    return section;
  }
  if (metrics === null) {
    body.className += " placeholder";
    body.textContent = "no metrics yet";
    return section;
  }
  if (!metrics.evaluated) {
    body.className += " placeholder";
    body.textContent = `${metrics.reason} (${metrics.unlabeled} regions unlabeled)`;
    return section;
  }

  const rows: Array<[string, string]> = [
    ["accuracy", metrics.accuracy.toFixed(4)],
    ["f1", metrics.f1.toFixed(4) + (metrics.f1_degenerate ? " (degenerate)" : "")],
    ["tp / tn / fp / fn", `${metrics.tp} / ${metrics.tn} / ${metrics.fp} / ${metrics.fn}`],
    ["unlabeled regions", String(metrics.unlabeled)],
    ["positive clusters", metrics.cluster_set.join(", ") || "none"],
  ];
  const table = doc.createElement("table");
  for (const [name, value] of rows) {
    const tr = doc.createElement("tr");
    const th = doc.createElement("th");
    th.textContent = name;
    const td = doc.createElement("td");
    td.className = `metric-${name.split(" ")[0]}`;
    td.textContent = value;
    tr.appendChild(th);
    tr.appendChild(td);
    table.appendChild(tr);
  }
  body.appendChild(table);
  return section;
}
