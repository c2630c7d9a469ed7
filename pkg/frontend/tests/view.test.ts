import { describe, expect, it } from "vitest";

import fixture from "../fixtures/session_fixture.json";
import type { Bundle, SessionResponse, WhatIfResponse } from "../src/types.js";
import {
  curveViews,
  influenceColor,
  influenceRows,
  regionRanking,
  tokenViews,
  whatIfView,
} from "../src/view.js";
import { collectNumbers } from "./helpers.js";

const session = fixture.session as SessionResponse;
const bundle = fixture.bundle as Bundle;

describe("view models", () => {
  it("slices token text from session offsets", () => {
    const tokens = tokenViews(session, new Set([0]), null);
    expect(tokens.map((t) => t.text).join("")).toBe(session.text);
    expect(tokens[0]?.selected).toBe(true);
    expect(tokens[1]?.selected).toBe(false);
  });

  it("attaches influence values only to attributed positions", () => {
    const tokens = tokenViews(session, new Set(), bundle);
    const attributed = new Set(bundle.targets.targets.map(([p]) => p));
    for (const token of tokens) {
      if (attributed.has(token.position)) {
        expect(token.influence).not.toBeNull();
      } else {
        expect(token.influence).toBeNull();
      }
    }
  });

  it("copies influence rows verbatim from the bundle", () => {
    const rows = influenceRows(bundle);
    rows.forEach((row, i) => {
      expect(row.raw).toBe(bundle.influence.raw[i]);
      expect(row.norm).toBe(bundle.influence.norm[i]);
      const altRaw = bundle.influence_alt.raw[i];
      if (altRaw !== row.raw) {
        expect(row.alt?.raw).toBe(altRaw);
        expect(row.alt?.variant).toBe(bundle.influence_alt.variant);
      } else {
        expect(row.alt).toBeNull();
      }
    });
  });

  it("copies curve points and AUCs verbatim", () => {
    for (const curve of curveViews(bundle)) {
      const source = bundle.curves[curve.kind];
      expect(curve.auc).toBe(source.auc);
      expect(curve.points.map((p) => p.x)).toEqual(source.xs);
      expect(curve.points.map((p) => p.y)).toEqual(source.ys);
    }
  });

  it("ranks regions in greedy order with their normalized scores", () => {
    const ranking = regionRanking(bundle);
    expect(ranking.map((r) => r.region)).toEqual(bundle.attribution.order);
    expect(ranking.map((r) => r.score)).toEqual(bundle.attribution.norm_scores);
  });

  it("maps what-if responses without touching the numbers", () => {
    const response = fixture.whatif_remove_all as WhatIfResponse;
    const view = whatIfView(response);
    expect(view.rows.map((r) => r.prob)).toEqual(response.probs);
    expect(view.removed).toEqual(response.removed_region_ids);
  });

  it("renders every score from an API field (thin-client rule)", () => {
    const apiNumbers = collectNumbers({
      session,
      bundle,
      whatif: fixture.whatif_remove_all,
    });
    const rendered: number[] = [];
    for (const token of tokenViews(session, new Set(), bundle)) {
      if (token.influence !== null) rendered.push(token.influence);
    }
    for (const row of influenceRows(bundle)) {
      rendered.push(row.raw, row.norm);
      if (row.alt) rendered.push(row.alt.raw, row.alt.norm);
    }
    for (const curve of curveViews(bundle)) {
      rendered.push(curve.auc);
      for (const point of curve.points) rendered.push(point.x, point.y);
    }
    for (const region of regionRanking(bundle)) rendered.push(region.score);
    for (const row of whatIfView(fixture.whatif_remove_all as WhatIfResponse).rows) {
      rendered.push(row.prob);
    }
    for (const value of rendered) {
      expect(apiNumbers.has(value), `rendered ${value} is not an API field`).toBe(true);
    }
  });

  it("uses a diverging color scale anchored at the extremes", () => {
    expect(influenceColor(0)).toBe("rgb(70, 130, 220)");
    expect(influenceColor(1)).toBe("rgb(200, 60, 60)");
    expect(influenceColor(0.5)).toBe("rgb(235, 235, 235)");
  });
});
