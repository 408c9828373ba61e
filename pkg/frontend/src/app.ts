import { Api, ApiError } from "./api.js";
import { SerialQueue } from "./queue.js";
import { renderApp, type RenderOptions } from "./render.js";
import {
  cycleLabel,
  emptyState,
  selectSlide,
  withError,
  withHeatmap,
  withHeatmapFailure,
  withLabelAck,
  withLabelFailure,
  withMetrics,
  withMetricsError,
  withOptimisticLabel,
  withRepresentatives,
  withSlides,
  type AppState,
} from "./state.js";
import type { Label } from "./types.js";

/** Glue between the service API and the DOM. Holds the single AppState,
 *  folds fetched responses into it, and re-renders after every change. All
 *  label posts are funneled through one SerialQueue. */
export class App {
  state: AppState = emptyState();
  readonly queue = new SerialQueue();

  constructor(
    private readonly root: HTMLElement,
    private readonly api: Api,
    private readonly options: RenderOptions = {},
  ) {}

  private update(state: AppState): void {
    this.state = state;
    renderApp(this.root, this.state, this, {
      urlBase: this.api.base,
      ...this.options,
    });
  }

  async start(): Promise<void> {
    this.update(this.state);
    try {
      const resp = await this.api.slides();
      this.update(withSlides(this.state, resp.slides));
      const only = resp.slides.length === 1 ? resp.slides[0] : undefined;
      if (only !== undefined) {
        await this.select(only.slide_id);
      }
    } catch (err) {
      this.update(withError(this.state, categoryOf(err)));
    }
  }

  onSelectSlide(slideId: string): void {
    void this.select(slideId);
  }

  async select(slideId: string): Promise<void> {
    this.update(selectSlide(this.state, slideId));
    await this.refresh();
  }

  /** One click on a representative card: advance the label cycle from the
   *  state currently on screen, show it immediately, and enqueue exactly one
   *  post. The service's returned revision drives the follow-up refresh. */
  onCardClick(cluster: number): void {
    const slideId = this.state.selected;
    const card = this.state.cards.find((c) => c.cluster === cluster);
    if (slideId === null || card === undefined) {
      return;
    }
    const next: Label = cycleLabel(card.label);
    this.update(withOptimisticLabel(this.state, cluster, next));
    void this.queue.enqueue(async () => {
      try {
        const ack = await this.api.postLabel(slideId, cluster, next);
        this.update(withLabelAck(this.state, cluster, ack.revision));
        await this.refresh();
      } catch (err) {
        // drop the optimistic value and fall back to what the service holds
        this.update(withLabelFailure(this.state, cluster, categoryOf(err)));
        await this.refresh();
      }
    });
  }

  /** Re-fetch everything for the selected slide. Stale responses (older
   *  revision than already displayed) are ignored by the state guards. */
  async refresh(): Promise<void> {
    const slideId = this.state.selected;
    if (slideId === null) {
      return;
    }
    const [reps, heatmap, metrics] = await Promise.allSettled([
      this.api.representatives(slideId),
      this.api.heatmap(slideId),
      this.api.metrics(slideId),
    ]);

    if (reps.status === "fulfilled") {
      this.update(withRepresentatives(this.state, reps.value));
    } else {
      this.update(withError(this.state, categoryOf(reps.reason)));
    }
    if (heatmap.status === "fulfilled") {
      this.update(withHeatmap(this.state, heatmap.value));
    } else {
      this.update(withHeatmapFailure(this.state));
    }
    if (metrics.status === "fulfilled") {
      this.update(withMetrics(this.state, metrics.value));
    } else {
      this.update(withMetricsError(this.state, categoryOf(metrics.reason)));
    }
  }

  /** Settles once all posts enqueued so far have been acknowledged. */
  idle(): Promise<void> {
    return this.queue.idle();
  }
}

function categoryOf(err: unknown): string {
  if (err instanceof ApiError) {
    return err.category;
  }
  return err instanceof Error ? err.message : String(err);
}
