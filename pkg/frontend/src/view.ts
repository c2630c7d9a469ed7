/** Pure view-model builders. Every number shown in the UI is copied verbatim
 * from an API response field here; no scores are computed client-side. */

import type { Bundle, SessionResponse, WhatIfResponse } from "./types.js";

export interface TokenView {
  position: number;
  text: string;
  selected: boolean;
  /** Normalized influence straight from bundle.influence.norm, when attributed. */
  influence: number | null;
}

export function tokenViews(
  session: SessionResponse,
  selected: ReadonlySet<number>,
  bundle: Bundle | null,
): TokenView[] {
  const influenceByPosition = new Map<number, number>();
  if (bundle) {
    bundle.targets.targets.forEach(([position], index) => {
      const value = bundle.influence.norm[index];
      if (value !== undefined) influenceByPosition.set(position, value);
    });
  }
  return session.token_ids.map((tokenId, position) => {
    const span = session.offsets[position];
    const text =
      session.text !== null && span !== undefined
        ? session.text.slice(span[0], span[1])
        : String(tokenId);
    return {
      position,
      text,
      selected: selected.has(position),
      influence: influenceByPosition.get(position) ?? null,
    };
  });
}

export interface InfluenceRow {
  position: number;
  variant: string;
  raw: number;
  norm: number;
  /** Present only when the alternative variant disagrees with the main one. */
  alt: { variant: string; raw: number; norm: number } | null;
}

export function influenceRows(bundle: Bundle): InfluenceRow[] {
  return bundle.targets.targets.map(([position], index) => {
    const raw = bundle.influence.raw[index] ?? 0;
    const norm = bundle.influence.norm[index] ?? 0;
    const altRaw = bundle.influence_alt.raw[index] ?? 0;
    const altNorm = bundle.influence_alt.norm[index] ?? 0;
    const differs = altRaw !== raw;
    return {
      position,
      variant: bundle.influence.variant,
      raw,
      norm,
      alt: differs
        ? { variant: bundle.influence_alt.variant, raw: altRaw, norm: altNorm }
        : null,
    };
  });
}

export interface CurveView {
  kind: "insertion" | "deletion";
  points: { x: number; y: number }[];
  auc: number;
}

export function curveViews(bundle: Bundle): CurveView[] {
  return (["insertion", "deletion"] as const).map((kind) => ({
    kind,
    points: bundle.curves[kind].xs.map((x, i) => ({
      x,
      y: bundle.curves[kind].ys[i] ?? 0,
    })),
    auc: bundle.curves[kind].auc,
  }));
}

export interface RankedRegion {
  rank: number;
  region: number;
  score: number;
}

export function regionRanking(bundle: Bundle): RankedRegion[] {
  return bundle.attribution.order.map((region, rank) => ({
    rank,
    region,
    score: bundle.attribution.norm_scores[rank] ?? 0,
  }));
}

export interface WhatIfRow {
  position: number;
  prob: number;
}

export interface WhatIfView {
  rows: WhatIfRow[];
  text: string | null;
  removed: number[];
}

export function whatIfView(response: WhatIfResponse): WhatIfView {
  return {
    rows: response.positions.map((position, i) => ({
      position,
      prob: response.probs[i] ?? 0,
    })),
    text: response.text,
    removed: response.removed_region_ids,
  };
}

/** Diverging color for normalized influence: blue = prior, red = evidence.
 * Pure rendering; the value itself always comes from the API. */
export function influenceColor(norm: number): string {
  const v = Math.min(Math.max(norm, 0), 1);
  const mix = (a: number, b: number, t: number) => Math.round(a + (b - a) * t);
  if (v < 0.5) {
    const t = v / 0.5;
    return `rgb(${mix(70, 235, t)}, ${mix(130, 235, t)}, ${mix(220, 235, t)})`;
  }
  const t = (v - 0.5) / 0.5;
  return `rgb(${mix(235, 200, t)}, ${mix(235, 60, t)}, ${mix(235, 60, t)})`;
}
