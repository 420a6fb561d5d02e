/** Browser wiring: routes, event handlers, refetch-after-mutation. */

import { ApiClient } from "./api.js";
import { TriageStore } from "./state.js";
import {
  renderActiveReport,
  renderConflictBanner,
  renderContext,
  renderEventDetail,
  renderExplanation,
  renderModeComparison,
  renderModelsTable,
  renderQueueTable,
  renderReclassifyDialog,
  renderRatingWidget,
  renderSummaryCards,
  renderWeeklyRatings,
} from "./views.js";

declare global {
  interface Window {
    TRIAGE_BASE_URL?: string;
    TRIAGE_TOKEN?: string;
  }
}

const baseUrl = window.TRIAGE_BASE_URL ?? localStorage.getItem("triage-base-url") ?? "";
const token = window.TRIAGE_TOKEN ?? localStorage.getItem("triage-token") ?? "";
const api = new ApiClient(baseUrl, token);
const store = new TriageStore(api);

const $ = (selector: string) => document.querySelector(selector) as HTMLElement;

async function showQueue(): Promise<void> {
  await store.refreshQueue();
  $("#banner").innerHTML = renderConflictBanner(store.conflicts);
  $("#queue").innerHTML = store.page ? renderQueueTable(store.page) : "";
}

async function showDetail(eventId: string): Promise<void> {
  const item = await store.select(eventId);
  $("#detail-main").innerHTML = renderEventDetail(item);
  $("#detail-dialog").innerHTML = renderReclassifyDialog(store.searchLabels(""), "", eventId);
  if (item.replay_id) {
    $("#detail-rating").innerHTML = renderRatingWidget(item.replay_id);
  }
  const [explanation, context, summary] = await Promise.all([
    api.getExplanation(eventId),
    api.getContext(eventId),
    api.getSummary(eventId),
  ]);
  $("#detail-explanation").innerHTML = renderExplanation(explanation);
  $("#detail-context").innerHTML = renderContext(context);
  $("#detail-summary").innerHTML = renderSummaryCards(summary.groups);
  $("#detail").classList.remove("hidden");
}

async function showReports(): Promise<void> {
  const [models, ratings] = await Promise.all([api.listModels(), api.weeklyRatings()]);
  $("#models").innerHTML = renderModelsTable(models.models);
  $("#mode-comparison").innerHTML = renderModeComparison(models.models);
  $("#weekly-ratings").innerHTML = renderWeeklyRatings(ratings);
  try {
    $("#active-report").innerHTML = renderActiveReport(await api.activeReport());
  } catch {
    $("#active-report").innerHTML = `<p class="empty">No active model yet.</p>`;
  }
}

function wireEvents(): void {
  $("#filters").addEventListener("change", () => {
    const flagReason = ($("#filter-flag-reason") as HTMLSelectElement).value;
    const label = ($("#filter-label") as HTMLInputElement).value.trim();
    const replay = ($("#filter-replay") as HTMLInputElement).value.trim();
    const flaggedOnly = ($("#filter-flagged") as HTMLInputElement).checked;
    store.setFilters({
      flagReason: (flagReason || undefined) as "uncertain" | "problem_group" | undefined,
      label: label || undefined,
      replayId: replay || undefined,
      flagged: flaggedOnly ? true : undefined,
    });
    void showQueue();
  });

  $("#queue").addEventListener("click", (event) => {
    const row = (event.target as HTMLElement).closest<HTMLElement>(".queue-row");
    if (row?.dataset.eventId) void showDetail(row.dataset.eventId);
  });

  document.body.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const labelButton = target.closest<HTMLElement>(".label-option");
    if (labelButton?.dataset.eventId && labelButton.dataset.labelId) {
      void store
        .submitReclassify(labelButton.dataset.eventId, labelButton.dataset.labelId)
        .then(() => showQueue())
        .then(() => showDetail(labelButton.dataset.eventId as string));
      return;
    }
    if (target.classList.contains("rating-submit")) {
      const fieldset = target.closest<HTMLElement>(".rating");
      const checked = fieldset?.querySelector<HTMLInputElement>("input[name=rating]:checked");
      if (fieldset?.dataset.replayId && checked) {
        void store.submitRating(fieldset.dataset.replayId, Number(checked.value));
      }
    }
  });

  document.body.addEventListener("input", (event) => {
    const target = event.target as HTMLInputElement;
    if (target.classList.contains("label-search")) {
      const dialog = target.closest<HTMLElement>(".reclassify");
      const eventId = dialog?.dataset.eventId ?? "";
      $("#detail-dialog").innerHTML = renderReclassifyDialog(
        store.searchLabels(target.value),
        target.value,
        eventId,
      );
      const search = $("#detail-dialog").querySelector<HTMLInputElement>(".label-search");
      search?.focus();
      search?.setSelectionRange(target.value.length, target.value.length);
    }
  });

  $("#nav-queue").addEventListener("click", () => {
    $("#view-reports").classList.add("hidden");
    $("#view-queue").classList.remove("hidden");
    void showQueue();
  });
  $("#nav-reports").addEventListener("click", () => {
    $("#view-queue").classList.add("hidden");
    $("#view-reports").classList.remove("hidden");
    void showReports();
  });
}

async function boot(): Promise<void> {
  wireEvents();
  await store.loadLabels();
  await showQueue();
}

void boot();
