/** Browser bootstrap: session id persists in the URL hash across reloads. */

import { ChatApi } from "./api.js";
import { ChatApp } from "./app.js";

function apiBase(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  return fromQuery ?? "http://127.0.0.1:8000";
}

export async function boot(root: HTMLElement): Promise<ChatApp> {
  const app = new ChatApp(new ChatApi(apiBase()), root);
  const existing = window.location.hash.replace(/^#/, "") || undefined;
  await app.start(existing);
  if (app.sessionId) window.location.hash = app.sessionId;
  return app;
}

const mount = document.getElementById("app");
if (mount) void boot(mount);
