// Response shapes for the run service HTTP API. These mirror the JSON the
// service emits; the UI never derives label state on its own, it just
// re-renders whatever the last fetch returned.

export type Label = "positive" | "negative" | "unlabeled";

export interface SlideSummary {
  slide_id: string;
  regions: number;
  k: number;
  mean_silhouette: number;
}

export interface SlidesResponse {
  slides: SlideSummary[];
}

export interface RepresentativeCard {
  cluster: number;
  region_id: string;
  patch_url: string;
  label: Label;
}

export interface RepresentativesResponse {
  slide_id: string;
  revision: number;
  representatives: RepresentativeCard[];
}

export interface LabelPostResponse {
  slide_id: string;
  revision: number;
}

export interface HeatmapResponse {
  slide_id: string;
  revision: number;
  rows: number;
  cols: number;
  values: number[][];
}

interface MetricsBase {
  slide_id: string;
  revision: number;
  unlabeled: number;
}

export interface MetricsEvaluated extends MetricsBase {
  evaluated: true;
  k: number;
  cluster_set: number[];
  accuracy: number;
  f1: number;
  f1_degenerate: boolean;
  tp: number;
  tn: number;
  fp: number;
  fn: number;
}

export interface MetricsSkipped extends MetricsBase {
  evaluated: false;
  reason: string;
}

export type MetricsResponse = MetricsEvaluated | MetricsSkipped;

export interface ErrorBody {
  error: string;
  message: string;
}
