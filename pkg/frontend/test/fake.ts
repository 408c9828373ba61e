import { ApiError, type Api } from "../src/api.js";
import type {
  HeatmapResponse,
  Label,
  MetricsResponse,
  RepresentativesResponse,
  SlidesResponse,
} from "../src/types.js";

/** In-memory stand-in for the run service, mirroring its HTTP contract:
 *  a per-slide revision counter bumped by every accepted label post, and
 *  snapshots that echo whatever labels were posted. Used by the DOM tests;
 *  the integration test talks to the real service instead. */
export class FakeService {
  revision = 0;
  labels = new Map<number, Label>();
  posts: Array<{ cluster: number; label: Label }> = [];
  failNextPost: ApiError | null = null;
  failHeatmap = false;
  postDelayMs = 0;

  constructor(
    public slideId: string,
    public k: number,
  ) {}

  private reps(): RepresentativesResponse {
    return {
      slide_id: this.slideId,
      revision: this.revision,
      representatives: Array.from({ length: this.k }, (_, cluster) => ({
        cluster,
        region_id: `${this.slideId}:${cluster}:0`,
        patch_url: `/api/patches/${this.slideId}:${cluster}:0`,
        label: this.labels.get(cluster) ?? "unlabeled",
      })),
    };
  }

  private heatmap(): HeatmapResponse {
    return {
      slide_id: this.slideId,
      revision: this.revision,
      rows: 2,
      cols: 2,
      values: [
        [0, 1],
        [0.5, 0],
      ],
    };
  }

  private metrics(): MetricsResponse {
    return {
      slide_id: this.slideId,
      revision: this.revision,
      evaluated: false,
      reason: "no labeled regions",
      unlabeled: 8,
    };
  }

  api(): Api {
    const service = this;
    const fake = {
      base: "",
      async slides(): Promise<SlidesResponse> {
        return {
          slides: [
            {
              slide_id: service.slideId,
              regions: 8,
              k: service.k,
              mean_silhouette: 0.5,
            },
          ],
        };
      },
      async representatives(): Promise<RepresentativesResponse> {
        return service.reps();
      },
      async heatmap(): Promise<HeatmapResponse> {
        if (service.failHeatmap) {
          throw new ApiError("MissingStage", "induced heatmap failure", 409);
        }
        return service.heatmap();
      },
      async metrics(): Promise<MetricsResponse> {
        return service.metrics();
      },
      async postLabel(_slide: string, cluster: number, label: Label) {
        if (service.postDelayMs > 0) {
          await new Promise((resolve) => setTimeout(resolve, service.postDelayMs));
        }
        if (service.failNextPost !== null) {
          const err = service.failNextPost;
          service.failNextPost = null;
          throw err;
        }
        service.posts.push({ cluster, label });
        if (label === "unlabeled") {
          service.labels.delete(cluster);
        } else {
          service.labels.set(cluster, label);
        }
        service.revision += 1;
        return { slide_id: service.slideId, revision: service.revision };
      },
      patchUrl(relative: string): string {
        return relative;
      },
    };
    return fake as unknown as Api;
  }
}
