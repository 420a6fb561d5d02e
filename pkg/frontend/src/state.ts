/** Dashboard state: queue filters, selection, and mutation discipline.
 *
 * Two rules the store enforces on every operator mutation:
 *  - one journal entry per click: while a mutation for an event is in
 *    flight, further submits for that event are dropped, so a double-click
 *    can never produce two POSTs;
 *  - no optimistic updates for reclassification: the journal is
 *    authoritative, so the queue refetches after each mutation, and a
 *    mismatch between what this session submitted and what the service
 *    returned (another operator won the latest-wins race) surfaces as a
 *    conflict banner instead of being papered over.
 */

import { ApiClient } from "./api.js";
import type { Label, QueueFilters, QueueItem, QueuePage } from "./types.js";

export type MutationResult = "submitted" | "duplicate";

export class TriageStore {
  filters: QueueFilters = { offset: 0, limit: 50 };
  page: QueuePage | null = null;
  selected: QueueItem | null = null;
  labels: Label[] = [];
  conflicts: string[] = [];
  operatorId = "operator";

  private pending = new Set<string>();
  private lastSubmittedLabel = new Map<string, string>();

  constructor(private readonly api: ApiClient) {}

  async loadLabels(): Promise<void> {
    this.labels = (await this.api.listLabels()).labels;
  }

  /** Client-side search over the label registry (loaded once per session). */
  searchLabels(query: string): Label[] {
    const needle = query.trim().toLowerCase();
    if (!needle) return this.labels;
    return this.labels.filter(
      (l) =>
        l.label_id.toLowerCase().includes(needle) ||
        l.display_name.toLowerCase().includes(needle),
    );
  }

  async refreshQueue(): Promise<QueuePage> {
    this.page = await this.api.listPredictions(this.filters);
    this.detectConflicts();
    return this.page;
  }

  setFilters(filters: Partial<QueueFilters>): void {
    this.filters = { ...this.filters, ...filters, offset: 0 };
  }

  async nextPage(): Promise<void> {
    if (!this.page) return;
    const next = (this.filters.offset ?? 0) + (this.filters.limit ?? 50);
    if (next >= this.page.total) return;
    this.filters = { ...this.filters, offset: next };
    await this.refreshQueue();
  }

  async select(eventId: string): Promise<QueueItem> {
    this.selected = await this.api.getPrediction(eventId);
    return this.selected;
  }

  isPending(eventId: string): boolean {
    return this.pending.has(eventId);
  }

  async submitReclassify(eventId: string, labelId: string): Promise<MutationResult> {
    if (this.pending.has(eventId)) return "duplicate";
    this.pending.add(eventId);
    try {
      await this.api.reclassify(eventId, labelId, this.operatorId);
      this.lastSubmittedLabel.set(eventId, labelId);
    } finally {
      this.pending.delete(eventId);
    }
    await this.refreshQueue();
    if (this.selected?.event_id === eventId) {
      await this.select(eventId);
    }
    return "submitted";
  }

  async submitConfirm(eventId: string): Promise<MutationResult> {
    if (this.pending.has(eventId)) return "duplicate";
    this.pending.add(eventId);
    try {
      await this.api.confirm(eventId, this.operatorId);
    } finally {
      this.pending.delete(eventId);
    }
    await this.refreshQueue();
    return "submitted";
  }

  /** Ratings outside 1..4 are rejected locally, before any request is sent. */
  async submitRating(replayId: string, rating: number): Promise<void> {
    if (!Number.isInteger(rating) || rating < 1 || rating > 4) {
      throw new RangeError(`rating must be an integer in 1..4, got ${rating}`);
    }
    await this.api.rateReplay(replayId, rating, this.operatorId);
  }

  /** After a refetch, flag rows where the service disagrees with what we sent. */
  private detectConflicts(): void {
    this.conflicts = [];
    if (!this.page) return;
    for (const item of this.page.items) {
      const submitted = this.lastSubmittedLabel.get(item.event_id);
      if (submitted !== undefined && item.operator_label_id !== submitted) {
        this.conflicts.push(
          `event ${item.event_id}: you set ${submitted}, but the journal now says ` +
            `${item.operator_label_id ?? "(none)"} (latest operator action wins)`,
        );
      }
    }
  }
}
