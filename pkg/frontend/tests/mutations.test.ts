import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { TriageStore } from "../src/state.js";
import type { QueueItem, QueuePage } from "../src/types.js";
import { FakeFetch, fixture } from "./helpers.js";

const BASE = "http://triage.local";
const DETAIL = fixture<QueueItem>("prediction_detail");
const AFTER = fixture<QueueItem>("prediction_after_reclassify");
const EVENT_ID = DETAIL.event_id;

function mutationServer(options: { serverLabel?: string | null; delayMs?: number } = {}) {
  const serverLabel = options.serverLabel ?? AFTER.operator_label_id;
  const fake = new FakeFetch();
  const queueView = (): QueuePage => ({
    items: [{ ...DETAIL, operator_label_id: serverLabel, effective_label_id: serverLabel ?? DETAIL.label_id }],
    total: 1,
    offset: 0,
    limit: 50,
  });
  fake.route("POST http://triage.local/predictions/", () => {
    if (options.delayMs) {
      const wake = Date.now() + options.delayMs;
      while (Date.now() < wake) {
        /* hold the request open so a second click lands while pending */
      }
    }
    return AFTER;
  });
  fake.route("GET http://triage.local/predictions?", queueView);
  fake.route("GET http://triage.local/predictions/", () => queueView().items[0]);
  fake.route("POST http://triage.local/replays/", { ok: true });
  return fake;
}

describe("reclassify round trip", () => {
  it("posts once, then refetches the queue (journal is authoritative)", async () => {
    const fake = mutationServer();
    const store = new TriageStore(new ApiClient(BASE, "", fake.fetch));
    const result = await store.submitReclassify(EVENT_ID, AFTER.operator_label_id as string);
    expect(result).toBe("submitted");
    expect(fake.callsTo("POST http://triage.local/predictions/").length).toBe(1);
    // the refetch happened after the mutation, not before
    const order = fake.calls.map((c) => c.method);
    expect(order[0]).toBe("POST");
    expect(fake.callsTo("GET http://triage.local/predictions?").length).toBe(1);
    // and the queue row now shows the operator label, straight from the service
    expect(store.page?.items[0].operator_label_id).toBe(AFTER.operator_label_id);
    expect(store.conflicts).toEqual([]);
  });

  it("double-click produces exactly one journal entry", async () => {
    const fake = mutationServer({ delayMs: 15 });
    const store = new TriageStore(new ApiClient(BASE, "", fake.fetch));
    const first = store.submitReclassify(EVENT_ID, "connection_reset");
    const second = store.submitReclassify(EVENT_ID, "connection_reset");
    const [r1, r2] = await Promise.all([first, second]);
    expect([r1, r2].sort()).toEqual(["duplicate", "submitted"]);
    expect(fake.callsTo("POST http://triage.local/predictions/").length).toBe(1);
  });

  it("confirm also guards against duplicate submits", async () => {
    const fake = mutationServer({ delayMs: 15 });
    const store = new TriageStore(new ApiClient(BASE, "", fake.fetch));
    const [r1, r2] = await Promise.all([
      store.submitConfirm(EVENT_ID),
      store.submitConfirm(EVENT_ID),
    ]);
    expect([r1, r2].sort()).toEqual(["duplicate", "submitted"]);
    expect(fake.callsTo("POST http://triage.local/predictions/").length).toBe(1);
  });

  it("raises a conflict banner when another operator won latest-wins", async () => {
    const fake = mutationServer({ serverLabel: "someone_elses_label" });
    const store = new TriageStore(new ApiClient(BASE, "", fake.fetch));
    await store.submitReclassify(EVENT_ID, "connection_reset");
    expect(store.conflicts.length).toBe(1);
    expect(store.conflicts[0]).toContain(EVENT_ID);
    expect(store.conflicts[0]).toContain("someone_elses_label");
  });
});

describe("rating range enforcement", () => {
  it.each([0, 5, -1, 2.5, NaN])("rejects %s before any request is sent", async (bad) => {
    const fake = mutationServer();
    const store = new TriageStore(new ApiClient(BASE, "", fake.fetch));
    await expect(store.submitRating("replay-1", bad as number)).rejects.toThrow(RangeError);
    expect(fake.calls.length).toBe(0);
  });

  it.each([1, 2, 3, 4])("sends rating %s", async (good) => {
    const fake = mutationServer();
    const store = new TriageStore(new ApiClient(BASE, "", fake.fetch));
    await store.submitRating("replay-1", good);
    const calls = fake.callsTo("POST http://triage.local/replays/");
    expect(calls.length).toBe(1);
    expect(calls[0].body).toMatchObject({ rating: good });
  });
});
