/** Pure HTML renderers. Every number and identifier comes verbatim from the
 * service payloads; long free text is excerpted for table cells, identifiers
 * and labels never are.
 */

import type {
  ContextResponse,
  CvReport,
  Explanation,
  Label,
  ModelListing,
  QueueItem,
  QueuePage,
  SummaryGroup,
  WeeklyRatings,
} from "./types.js";

export const RATING_CAPTIONS: Record<number, string> = {
  1: "No action needed: classification correct / expected behavior",
  2: "Reclassified by operator: uncertain prediction",
  3: "Reclassified by operator: misclassified known class",
  4: "New failure class detected manually by operator",
};

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** Excerpt free text for a table cell; identifiers must never go through this. */
export function excerpt(text: string | null | undefined, maxLength = 80): string {
  if (!text) return "";
  return text.length <= maxLength ? text : `${text.slice(0, maxLength - 1)}…`;
}

export function formatPercent(value: number): string {
  return `${(value * 100).toFixed(2)}%`;
}

function flagBadge(item: QueueItem): string {
  if (!item.flagged) return "";
  const cls = item.flag_reason === "problem_group" ? "badge-problem" : "badge-uncertain";
  return `<span class="badge ${cls}">${escapeHtml(item.flag_reason ?? "")}</span>`;
}

export function renderQueueTable(page: QueuePage): string {
  const rows = page.items
    .map((item) => {
      const operator = item.operator_label_id
        ? `<span class="operator-label">${escapeHtml(item.operator_label_id)}</span>`
        : "";
      return (
        `<tr class="queue-row" data-event-id="${escapeHtml(item.event_id)}">` +
        `<td class="mono">${escapeHtml(item.event_id)}</td>` +
        `<td class="mono">${escapeHtml(item.replay_id ?? "")}</td>` +
        `<td>${escapeHtml(item.label_id)}${operator}</td>` +
        `<td class="num">${item.certainty.toFixed(3)}</td>` +
        `<td>${flagBadge(item)}</td>` +
        `<td class="text">${escapeHtml(excerpt(item.error_message))}</td>` +
        `<td class="text">${escapeHtml(excerpt(item.statement_string))}</td>` +
        `<td class="text">${escapeHtml(excerpt(item.summary_text, 60))}</td>` +
        `</tr>`
      );
    })
    .join("");
  const shownTo = page.offset + page.items.length;
  return (
    `<table class="queue">` +
    `<thead><tr><th>Event</th><th>Replay</th><th>Label</th><th>Certainty</th>` +
    `<th>Flag</th><th>Error message</th><th>Statement</th><th>Summary</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>` +
    `<div class="pager">showing ${page.offset + 1}–${shownTo} of ${page.total}</div>`
  );
}

export function renderConflictBanner(conflicts: string[]): string {
  if (!conflicts.length) return "";
  const lines = conflicts.map((c) => `<li>${escapeHtml(c)}</li>`).join("");
  return `<div class="banner banner-conflict"><strong>Concurrent edit detected.</strong><ul>${lines}</ul></div>`;
}

export function renderSummaryCards(groups: SummaryGroup[]): string {
  if (!groups.length) return `<p class="empty">No context summary.</p>`;
  return groups
    .map(
      (g) =>
        `<div class="summary-card">` +
        `<div class="summary-head"><span class="stype">${escapeHtml(g.statement_type)}</span>` +
        `<span class="status status-${escapeHtml(g.status)}">${escapeHtml(g.status)}</span></div>` +
        `<p class="summary-error">${escapeHtml(g.error)}</p>` +
        (g.objects.length
          ? `<p class="summary-objects">objects: ${g.objects.map((o) => `<code>${escapeHtml(o)}</code>`).join(", ")}</p>`
          : "") +
        `</div>`,
    )
    .join("");
}

export function renderExplanation(explanation: Explanation): string {
  const rows = explanation.neighbors
    .map(
      (n) =>
        `<tr><td class="mono">${escapeHtml(n.item_id)}</td>` +
        `<td>${escapeHtml(n.label_id)}</td>` +
        `<td class="num">${n.distance.toFixed(4)}</td>` +
        `<td class="num">${n.categorical_part.toFixed(4)}</td>` +
        `<td class="num">${n.textual_part.toFixed(4)}</td>` +
        `<td class="text">${escapeHtml(excerpt(n.text, 100))}</td></tr>`,
    )
    .join("");
  return (
    `<table class="neighbors">` +
    `<thead><tr><th>Training item</th><th>Label</th><th>Distance</th>` +
    `<th>Categorical part</th><th>Textual part</th><th>Text</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>`
  );
}

export function renderContext(context: ContextResponse): string {
  if (!context.items.length) return `<p class="empty">No prior failed/skipped events in this session.</p>`;
  const rows = context.items
    .map((item) => {
      const status = item["Skip Reason"] !== undefined ? "skipped" : "failed";
      const detail = item["Error Message"] ?? item["Skip Reason"] ?? "";
      return (
        `<tr><td><span class="status status-${status}">${status}</span></td>` +
        `<td class="text mono">${escapeHtml(item["Statement String"])}</td>` +
        `<td>${escapeHtml(item["Error Code"] ?? "")}</td>` +
        `<td class="text">${escapeHtml(detail)}</td></tr>`
      );
    })
    .join("");
  const truncated = context.truncated ? `<p class="note">context truncated</p>` : "";
  return (
    `<table class="context"><thead><tr><th>Status</th><th>Statement</th>` +
    `<th>Code</th><th>Error / skip reason</th></tr></thead><tbody>${rows}</tbody></table>` +
    truncated
  );
}

export function renderEventDetail(item: QueueItem): string {
  const history = item.history
    .map(
      (h) =>
        `<li>${escapeHtml(h.kind)}${h.new_label_id ? ` → ${escapeHtml(h.new_label_id)}` : ""} ` +
        `by ${escapeHtml(h.operator_id)} at ${escapeHtml(h.timestamp)}</li>`,
    )
    .join("");
  return (
    `<dl class="detail">` +
    `<dt>Event</dt><dd class="mono">${escapeHtml(item.event_id)}</dd>` +
    `<dt>Replay</dt><dd class="mono">${escapeHtml(item.replay_id ?? "")}</dd>` +
    `<dt>Predicted label</dt><dd>${escapeHtml(item.label_id)}</dd>` +
    `<dt>Operator label</dt><dd>${escapeHtml(item.operator_label_id ?? "—")}</dd>` +
    `<dt>Certainty</dt><dd>${item.certainty.toFixed(3)}</dd>` +
    `<dt>Flag</dt><dd>${escapeHtml(item.flag_reason ?? "none")}</dd>` +
    `<dt>Model version</dt><dd class="mono">${escapeHtml(item.model_version)}</dd>` +
    `<dt>Error message</dt><dd class="text">${escapeHtml(item.error_message ?? "")}</dd>` +
    `<dt>Statement</dt><dd class="text mono">${escapeHtml(item.statement_string ?? "")}</dd>` +
    `</dl>` +
    (history ? `<h4>Operator history</h4><ul class="history">${history}</ul>` : "")
  );
}

export function renderReclassifyDialog(labels: Label[], query: string, eventId: string): string {
  const options = labels
    .map(
      (l) =>
        `<li><button class="label-option" data-event-id="${escapeHtml(eventId)}" ` +
        `data-label-id="${escapeHtml(l.label_id)}">${escapeHtml(l.display_name)}` +
        ` <code>${escapeHtml(l.label_id)}</code></button></li>`,
    )
    .join("");
  return (
    `<div class="dialog reclassify" data-event-id="${escapeHtml(eventId)}">` +
    `<input type="search" class="label-search" placeholder="search labels" value="${escapeHtml(query)}">` +
    `<ul class="label-list">${options}</ul>` +
    `</div>`
  );
}

export function renderRatingWidget(replayId: string): string {
  const buttons = [1, 2, 3, 4]
    .map(
      (r) =>
        `<label class="rating-option"><input type="radio" name="rating" value="${r}">` +
        `<span class="rating-value">${r}</span> ${escapeHtml(RATING_CAPTIONS[r])}</label>`,
    )
    .join("");
  return (
    `<fieldset class="rating" data-replay-id="${escapeHtml(replayId)}">` +
    `<legend>Rate replay <code>${escapeHtml(replayId)}</code> (1 = expected, 4 = most severe)</legend>` +
    `${buttons}<button class="rating-submit">Submit rating</button></fieldset>`
  );
}

export function renderModelsTable(models: ModelListing[]): string {
  const rows = models
    .map((m) => {
      const gate = "passed" in m.gate ? (m.gate.passed ? "pass" : "review") : "—";
      const f1 = m.mean_f1_macro === null ? "" : formatPercent(m.mean_f1_macro);
      return (
        `<tr><td class="mono">${escapeHtml(m.version)}</td>` +
        `<td><span class="model-status model-${m.status}">${m.status}</span></td>` +
        `<td>${escapeHtml(m.feature_mode)}</td>` +
        `<td>${escapeHtml(m.vectorizer_kind)}</td>` +
        `<td class="num">${m.n_items}</td>` +
        `<td class="num">${f1}</td>` +
        `<td>${gate}</td></tr>`
      );
    })
    .join("");
  return (
    `<table class="models"><thead><tr><th>Version</th><th>Status</th><th>Feature mode</th>` +
    `<th>Vectorizer</th><th>Items</th><th>F1-Macro</th><th>Gate</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>`
  );
}

export function renderActiveReport(report: CvReport): string {
  const folds = report.folds
    .map(
      (f, i) =>
        `<tr><td class="num">${i}</td><td class="num">${formatPercent(f.f1_macro)}</td>` +
        `<td class="num">${formatPercent(f.f1_comb)}</td>` +
        `<td class="num">${formatPercent(f.accuracy)}</td>` +
        `<td class="num">${f.n_test}</td></tr>`,
    )
    .join("");
  return (
    `<h4>Active model: ${escapeHtml(report.feature_mode)} / ${escapeHtml(report.vectorizer_kind)} ` +
    `(${report.n_items} items, seed ${report.seed})</h4>` +
    `<table class="report"><thead><tr><th>Fold</th><th>F1-Macro</th><th>F1-Comb</th>` +
    `<th>Accuracy</th><th>Test size</th></tr></thead><tbody>${folds}` +
    `<tr class="mean-row"><td>mean</td><td class="num">${formatPercent(report.mean_f1_macro)}</td>` +
    `<td class="num">${formatPercent(report.mean_f1_comb)}</td>` +
    `<td class="num">${formatPercent(report.mean_accuracy)}</td><td></td></tr>` +
    `</tbody></table>`
  );
}

/** Feature-mode comparison across trained model versions. */
export function renderModeComparison(models: ModelListing[]): string {
  const rows = models
    .filter((m) => m.mean_f1_macro !== null)
    .map(
      (m) =>
        `<tr><td>${escapeHtml(m.feature_mode)}</td><td>${escapeHtml(m.vectorizer_kind)}</td>` +
        `<td class="num">${formatPercent(m.mean_f1_macro as number)}</td>` +
        `<td>${m.status}</td></tr>`,
    )
    .join("");
  return (
    `<table class="mode-comparison"><thead><tr><th>Textual attribute</th>` +
    `<th>Vectorization</th><th>F1-Macro</th><th>Status</th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderWeeklyRatings(ratings: WeeklyRatings): string {
  const weeks = Object.keys(ratings).sort();
  if (!weeks.length) return `<p class="empty">No ratings recorded.</p>`;
  const max = 4;
  const rows = weeks
    .map((week) => {
      const value = ratings[week];
      const width = Math.round((value / max) * 100);
      return (
        `<tr><td class="mono">${escapeHtml(week)}</td>` +
        `<td class="num">${value.toFixed(2)}</td>` +
        `<td class="bar-cell"><div class="bar" style="width:${width}%"></div></td></tr>`
      );
    })
    .join("");
  return (
    `<table class="weekly-ratings"><thead><tr><th>Week</th><th>Average rating</th>` +
    `<th></th></tr></thead><tbody>${rows}</tbody></table>`
  );
}
