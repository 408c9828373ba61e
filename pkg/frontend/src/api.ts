import type {
  HeatmapResponse,
  Label,
  LabelPostResponse,
  MetricsResponse,
  RepresentativesResponse,
  SlidesResponse,
} from "./types.js";

/** Error raised for any non-2xx service response. `category` carries the
 *  service's error taxonomy (UnknownSlide, InvalidLabel, NoRun, ...) so the
 *  UI can show it inline next to the thing that failed. */
export class ApiError extends Error {
  category: string;
  status: number;

  constructor(category: string, message: string, status: number) {
    super(message);
    this.name = "ApiError";
    this.category = category;
    this.status = status;
  }
}

async function toApiError(resp: Response): Promise<ApiError> {
  let category = `HTTP ${resp.status}`;
  let message = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.error === "string") {
      category = body.error;
      message = typeof body.message === "string" ? body.message : message;
    }
  } catch {
    // non-JSON body; keep the HTTP status as the category
  }
  return new ApiError(category, message, resp.status);
}

/** Thin fetch wrapper around the run service. One method per endpoint, no
 *  caching, no request deduplication; ordering of label posts is the
 *  caller's job (see SerialQueue). */
export class Api {
  readonly base: string;

  constructor(base = "") {
    this.base = base.replace(/\/$/, "");
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.base + path);
    if (!resp.ok) {
      throw await toApiError(resp);
    }
    return (await resp.json()) as T;
  }

  slides(): Promise<SlidesResponse> {
    return this.getJson("/api/slides");
  }

  representatives(slideId: string): Promise<RepresentativesResponse> {
    return this.getJson(`/api/slides/${encodeURIComponent(slideId)}/representatives`);
  }

  heatmap(slideId: string, grid?: number): Promise<HeatmapResponse> {
    const query = grid === undefined ? "" : `?grid=${grid}`;
    return this.getJson(`/api/slides/${encodeURIComponent(slideId)}/heatmap${query}`);
  }

  metrics(slideId: string): Promise<MetricsResponse> {
    return this.getJson(`/api/slides/${encodeURIComponent(slideId)}/metrics`);
  }

  async postLabel(slideId: string, cluster: number, label: Label): Promise<LabelPostResponse> {
    const resp = await fetch(`${this.base}/api/slides/${encodeURIComponent(slideId)}/labels`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ cluster_index: cluster, label }),
    });
    if (!resp.ok) {
      throw await toApiError(resp);
    }
    return (await resp.json()) as LabelPostResponse;
  }

  patchUrl(relative: string): string {
    return this.base + relative;
  }
}
