import { describe, expect, it } from "vitest";

import type {
  ContextResponse,
  CvReport,
  ModelListing,
  QueueItem,
  SummaryResponse,
  WeeklyRatings,
} from "../src/types.js";
import {
  RATING_CAPTIONS,
  formatPercent,
  renderActiveReport,
  renderContext,
  renderEventDetail,
  renderExplanation,
  renderModeComparison,
  renderModelsTable,
  renderRatingWidget,
  renderReclassifyDialog,
  renderSummaryCards,
  renderWeeklyRatings,
} from "../src/views.js";
import { fixture } from "./helpers.js";
import type { Explanation, Label } from "../src/types.js";

describe("training reports render service numbers verbatim", () => {
  it("active report table equals the service JSON", () => {
    const report = fixture<CvReport>("active_report");
    const html = renderActiveReport(report);
    expect(html).toContain(formatPercent(report.mean_f1_macro));
    expect(html).toContain(formatPercent(report.mean_f1_comb));
    expect(html).toContain(formatPercent(report.mean_accuracy));
    for (const fold of report.folds) {
      expect(html).toContain(formatPercent(fold.f1_macro));
      expect(html).toContain(formatPercent(fold.accuracy));
    }
    expect(html).toContain(report.feature_mode);
    expect(html).toContain(`${report.n_items} items`);
  });

  it("models table shows version, status and gate outcome", () => {
    const models = fixture<{ models: ModelListing[] }>("models").models;
    const html = renderModelsTable(models);
    for (const m of models) {
      expect(html).toContain(m.version);
      expect(html).toContain(`model-${m.status}`);
      if (m.mean_f1_macro !== null) expect(html).toContain(formatPercent(m.mean_f1_macro));
    }
    const statuses = models.map((m) => m.status);
    expect(statuses).toContain("active");
  });

  it("feature-mode comparison lists one row per trained version", () => {
    const models = fixture<{ models: ModelListing[] }>("models").models;
    const html = renderModeComparison(models);
    for (const m of models) {
      expect(html).toContain(`<td>${m.feature_mode}</td>`);
    }
  });

  it("weekly ratings table equals the service report", () => {
    const ratings = fixture<WeeklyRatings>("weekly_ratings");
    const html = renderWeeklyRatings(ratings);
    for (const [week, value] of Object.entries(ratings)) {
      expect(html).toContain(week);
      expect(html).toContain(value.toFixed(2));
    }
  });
});

describe("event detail views", () => {
  it("explanation neighbors render with both distance parts", () => {
    const explanation = fixture<Explanation>("explanation");
    const html = renderExplanation(explanation);
    for (const n of explanation.neighbors) {
      expect(html).toContain(n.item_id);
      expect(html).toContain(n.distance.toFixed(4));
      expect(html).toContain(n.categorical_part.toFixed(4));
      expect(html).toContain(n.textual_part.toFixed(4));
    }
  });

  it("summary groups render as structured cards, not raw JSON", () => {
    const summary = fixture<SummaryResponse>("event_summary");
    const html = renderSummaryCards(summary.groups);
    for (const group of summary.groups) {
      expect(html).toContain(group.statement_type);
      expect(html).toContain(`status-${group.status}`);
    }
    expect(html).toContain("summary-card");
    expect(html).not.toContain("raw_response");
  });

  it("context rows show skip reasons for skipped statements", () => {
    const context = fixture<ContextResponse>("event_context");
    const html = renderContext(context);
    const skipped = context.items.filter((i) => i["Skip Reason"] !== undefined);
    expect(skipped.length).toBeGreaterThan(0);
    expect(html).toContain("status-skipped");
  });

  it("detail view shows prediction and operator history after reclassify", () => {
    const after = fixture<QueueItem>("prediction_after_reclassify");
    const html = renderEventDetail(after);
    expect(html).toContain(after.event_id);
    expect(html).toContain(after.operator_label_id as string);
    expect(html).toContain("Operator history");
  });
});

describe("widgets", () => {
  it("rating widget offers exactly 1..4 with their captions", () => {
    const html = renderRatingWidget("replay-x");
    for (const r of [1, 2, 3, 4]) {
      expect(html).toContain(`value="${r}"`);
      expect(html).toContain(RATING_CAPTIONS[r]);
    }
    expect(html).not.toContain(`value="0"`);
    expect(html).not.toContain(`value="5"`);
  });

  it("reclassify dialog lists registry labels with search box", () => {
    const labels = fixture<{ labels: Label[] }>("labels").labels;
    const html = renderReclassifyDialog(labels, "", "ev-1");
    expect(html).toContain("label-search");
    for (const label of labels.slice(0, 3)) {
      expect(html).toContain(`data-label-id="${label.label_id}"`);
    }
  });
});
