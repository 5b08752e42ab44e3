/**
 * Entry point: wires the API client, session state, renderer, and keyboard
 * shortcuts (1 = Assistant 1, 2 = Assistant 2) onto a root element.
 *
 * Configuration is a single base URL: window.EVAL_BASE_URL if set, otherwise
 * same-origin (empty prefix, which matches `todsim eval-serve --static`).
 * The annotator id comes from the ?annotator= query parameter.
 */

import { ApiClient } from "./api.js";
import { render } from "./render.js";
import { Session } from "./state.js";

export interface BootstrapOptions {
  baseUrl?: string;
  annotatorId?: string;
}

declare global {
  interface Window {
    EVAL_BASE_URL?: string;
  }
}

export function bootstrap(root: HTMLElement, opts: BootstrapOptions = {}): Session {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = opts.baseUrl ?? window.EVAL_BASE_URL ?? "";
  const annotatorId =
    opts.annotatorId ??
    params.get("annotator") ??
    `anon-${Math.random().toString(36).slice(2, 10)}`;

  const client = new ApiClient(baseUrl);
  const session = new Session(client, annotatorId);
  session.onChange(() => render(root, session));

  window.addEventListener("keydown", (ev) => {
    if (ev.target instanceof HTMLTextAreaElement) {
      return; // typing a rationale must not flip the choice
    }
    if (ev.key === "1") {
      session.select("Left");
    } else if (ev.key === "2") {
      session.select("Right");
    }
  });

  render(root, session);
  void session.start();
  return session;
}

const rootEl =
  typeof document === "undefined" ? null : document.getElementById("app");
if (rootEl !== null) {
  bootstrap(rootEl);
}
