/**
 * DOM glue: paints the session state and forwards user input.
 *
 * Keyboard: g = good, b = bad, o = toggle overlay.  The annotator name
 * is remembered in localStorage and sent as the X-Annotator header.
 */

import { ApiError, AuditClient, AuthError } from "./api.js";
import { computeRects, rectStyle } from "./overlay.js";
import {
  SessionState,
  canSubmit,
  initialState,
  reduce,
  SessionEvent,
} from "./session.js";

const TOKEN_KEY = "audit-annotator";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function annotatorName(): string {
  let name = window.localStorage.getItem(TOKEN_KEY);
  while (!name) {
    name = window.prompt("annotator name") ?? "";
  }
  window.localStorage.setItem(TOKEN_KEY, name);
  return name;
}

export function startApp(): void {
  let state: SessionState = initialState;
  let client = new AuditClient("", annotatorName());

  const image = el<HTMLImageElement>("item-image");
  const rectLayer = el<HTMLDivElement>("rect-layer");
  const queryText = el<HTMLParagraphElement>("query-text");
  const progress = el<HTMLSpanElement>("progress");
  const toast = el<HTMLDivElement>("toast");
  const banner = el<HTMLDivElement>("banner");
  const goodButton = el<HTMLButtonElement>("vote-good");
  const badButton = el<HTMLButtonElement>("vote-bad");
  const retryButton = el<HTMLButtonElement>("retry");
  const overlayToggle = el<HTMLInputElement>("overlay-toggle");
  const serverToggle = el<HTMLInputElement>("server-toggle");
  const stage = el<HTMLDivElement>("stage");
  const doneBox = el<HTMLDivElement>("done");

  function drawRects(): void {
    rectLayer.replaceChildren();
    if (
      state.item === null ||
      !state.overlayVisible ||
      state.serverOverlay ||
      image.clientWidth === 0
    ) {
      return;
    }
    const rects = computeRects(state.item.boxes, {
      width: image.clientWidth,
      height: image.clientHeight,
    });
    for (const rect of rects) {
      const div = document.createElement("div");
      div.className = "box";
      div.setAttribute("style", rectStyle(rect));
      rectLayer.appendChild(div);
    }
  }

  function render(): void {
    const item = state.item;
    stage.hidden = item === null;
    doneBox.hidden = state.phase !== "done";
    banner.hidden = state.phase !== "error" && state.phase !== "auth";
    banner.textContent =
      state.phase === "auth"
        ? "annotator not recognized; reload and enter a registered name"
        : (state.error ?? "");
    retryButton.hidden = state.phase !== "error";
    toast.hidden = state.toast === null;
    toast.textContent = state.toast ?? "";
    progress.textContent = `${state.reviewed} reviewed / ${state.total} total`;
    const submittable = canSubmit(state);
    goodButton.disabled = !submittable;
    badButton.disabled = !submittable;
    overlayToggle.checked = state.overlayVisible;
    serverToggle.checked = state.serverOverlay;
    if (item !== null) {
      queryText.textContent = item.query;
      const wanted = state.serverOverlay ? item.overlay_url : item.image_url;
      if (image.getAttribute("src") !== wanted) {
        image.src = wanted;
      }
    }
    drawRects();
  }

  function dispatch(event: SessionEvent): void {
    state = reduce(state, event);
    render();
  }

  async function loadNext(): Promise<void> {
    try {
      dispatch({ kind: "next-ok", response: await client.fetchNext() });
    } catch (error) {
      if (error instanceof AuthError) {
        window.localStorage.removeItem(TOKEN_KEY);
        dispatch({ kind: "next-auth-failed" });
      } else {
        dispatch({ kind: "next-failed", message: String(error) });
      }
    }
  }

  async function submit(verdict: "good" | "bad"): Promise<void> {
    if (!canSubmit(state) || state.item === null) {
      return;
    }
    const tripletId = state.item.id;
    dispatch({ kind: "submit-started" });
    try {
      await client.submitVote(tripletId, verdict);
      dispatch({ kind: "submit-ok" });
      await loadNext();
    } catch (error) {
      const message =
        error instanceof ApiError ? error.detail : String(error);
      dispatch({ kind: "submit-failed", message });
    }
  }

  goodButton.addEventListener("click", () => void submit("good"));
  badButton.addEventListener("click", () => void submit("bad"));
  retryButton.addEventListener("click", () => {
    dispatch({ kind: "retry" });
    void loadNext();
  });
  overlayToggle.addEventListener("change", () =>
    dispatch({ kind: "toggle-overlay" }),
  );
  serverToggle.addEventListener("change", () =>
    dispatch({ kind: "toggle-server-overlay" }),
  );
  window.addEventListener("keydown", (event) => {
    if (event.key === "g") {
      void submit("good");
    } else if (event.key === "b") {
      void submit("bad");
    } else if (event.key === "o") {
      dispatch({ kind: "toggle-overlay" });
    }
  });
  image.addEventListener("load", drawRects);
  window.addEventListener("resize", drawRects);

  render();
  void loadNext();
}

startApp();
