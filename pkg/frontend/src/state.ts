import type {
  HeatmapResponse,
  Label,
  MetricsResponse,
  RepresentativeCard,
  RepresentativesResponse,
  SlideSummary,
} from "./types.js";

/** Everything the renderer needs, and nothing else. The state is only ever
 *  replaced wholesale by the functions below, each of which folds in one
 *  fetched response. No label arithmetic happens here: cards, heatmap and
 *  metrics always show what the service last returned (with a short-lived
 *  optimistic overlay on the clicked card until its post is acknowledged).
 */
export interface AppState {
  slides: SlideSummary[];
  selected: string | null;
  cards: RepresentativeCard[];
  heatmap: HeatmapResponse | null;
  heatmapStale: boolean;
  metrics: MetricsResponse | null;
  metricsError: string | null;
  revision: number;
  /** clusters with a label post in flight, shown with a pending marker */
  pending: Set<number>;
  error: string | null;
}

export function emptyState(): AppState {
  return {
    slides: [],
    selected: null,
    cards: [],
    heatmap: null,
    heatmapStale: false,
    metrics: null,
    metricsError: null,
    revision: 0,
    pending: new Set(),
    error: null,
  };
}

/** The click cycle for a representative card. A fresh (unlabeled) card goes
 *  positive on the first click, negative on the second, back to unlabeled on
 *  the third. */
export function cycleLabel(current: Label): Label {
  switch (current) {
    case "unlabeled":
      return "positive";
    case "positive":
      return "negative";
    case "negative":
      return "unlabeled";
  }
}

export function withSlides(state: AppState, slides: SlideSummary[]): AppState {
  return { ...state, slides, error: null };
}

export function selectSlide(state: AppState, slideId: string): AppState {
  if (slideId === state.selected) {
    return state;
  }
  return {
    ...emptyState(),
    slides: state.slides,
    selected: slideId,
  };
}

function fresh(state: AppState, slideId: string, revision: number): boolean {
  return slideId === state.selected && revision >= state.revision;
}

/** Fold in a representatives response. Responses for a different slide or
 *  with a revision older than one already displayed are dropped, so the
 *  revision shown to the user never moves backwards. */
export function withRepresentatives(state: AppState, resp: RepresentativesResponse): AppState {
  if (!fresh(state, resp.slide_id, resp.revision)) {
    return state;
  }
  return {
    ...state,
    cards: resp.representatives,
    revision: resp.revision,
  };
}

export function withHeatmap(state: AppState, resp: HeatmapResponse): AppState {
  if (!fresh(state, resp.slide_id, resp.revision)) {
    return state;
  }
  return {
    ...state,
    heatmap: resp,
    heatmapStale: false,
    revision: Math.max(state.revision, resp.revision),
  };
}

/** A failed overlay fetch keeps the old raster on screen but marks it stale
 *  so the user can tell it lags the labels. */
export function withHeatmapFailure(state: AppState): AppState {
  return { ...state, heatmapStale: true };
}

export function withMetrics(state: AppState, resp: MetricsResponse): AppState {
  if (!fresh(state, resp.slide_id, resp.revision)) {
    return state;
  }
  return {
    ...state,
    metrics: resp,
    metricsError: null,
    revision: Math.max(state.revision, resp.revision),
  };
}

export function withMetricsError(state: AppState, category: string): AppState {
  return { ...state, metrics: null, metricsError: category };
}

/** Optimistic overlay: show the clicked label immediately and mark the
 *  cluster pending until the service acknowledges the post. A fresh user
 *  action also dismisses any lingering error banner. */
export function withOptimisticLabel(state: AppState, cluster: number, label: Label): AppState {
  const cards = state.cards.map((card) =>
    card.cluster === cluster ? { ...card, label } : card,
  );
  const pending = new Set(state.pending);
  pending.add(cluster);
  return { ...state, cards, pending, error: null };
}

/** Reconcile an acknowledged label post: adopt the returned revision (which
 *  only ever grows) and clear the pending marker. The authoritative card
 *  state arrives with the follow-up representatives fetch. */
export function withLabelAck(state: AppState, cluster: number, revision: number): AppState {
  const pending = new Set(state.pending);
  pending.delete(cluster);
  return {
    ...state,
    pending,
    revision: Math.max(state.revision, revision),
    error: null,
  };
}

export function withLabelFailure(state: AppState, cluster: number, category: string): AppState {
  const pending = new Set(state.pending);
  pending.delete(cluster);
  return { ...state, pending, error: category };
}

export function withError(state: AppState, category: string): AppState {
  return { ...state, error: category };
}
