import { readFileSync } from "node:fs";

import type { FetchLike } from "../src/api.js";

export function fixture<T>(name: string): T {
  const url = new URL(`../fixtures/${name}.json`, import.meta.url);
  return JSON.parse(readFileSync(url, "utf-8")) as T;
}

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
  headers: Record<string, string>;
}

export type RouteHandler = (call: RecordedCall) => unknown;

/** Fetch stand-in that routes by "METHOD path-prefix" and records every call. */
export class FakeFetch {
  calls: RecordedCall[] = [];
  private routes: [string, RouteHandler][] = [];

  route(pattern: string, handler: RouteHandler | unknown): this {
    this.routes.push([
      pattern,
      typeof handler === "function" ? (handler as RouteHandler) : () => handler,
    ]);
    return this;
  }

  fetch: FetchLike = (url, init) => {
    const method = init?.method ?? "GET";
    const call: RecordedCall = {
      url,
      method,
      body: init?.body ? JSON.parse(init.body as string) : undefined,
      headers: (init?.headers as Record<string, string>) ?? {},
    };
    this.calls.push(call);
    for (const [pattern, handler] of this.routes) {
      const [routeMethod, prefix] = pattern.split(" ", 2);
      if (method === routeMethod && url.startsWith(prefix)) {
        const payload = handler(call);
        if (payload instanceof Response) return Promise.resolve(payload);
        return Promise.resolve(
          new Response(JSON.stringify(payload), {
            status: 200,
            headers: { "Content-Type": "application/json" },
          }),
        );
      }
    }
    return Promise.resolve(
      new Response(JSON.stringify({ detail: `no route for ${method} ${url}` }), { status: 404 }),
    );
  };

  callsTo(pattern: string): RecordedCall[] {
    const [routeMethod, prefix] = pattern.split(" ", 2);
    return this.calls.filter((c) => c.method === routeMethod && c.url.startsWith(prefix));
  }
}
