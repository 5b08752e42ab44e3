import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { ApiClient, Choice, TaskView } from "../src/api.js";
import { bootstrap } from "../src/app.js";
import { LEAK_MARKERS, render } from "../src/render.js";
import { Session } from "../src/state.js";
import { BackendTask, MockBackend, makeTask } from "./mockBackend.js";

const TURNS = {
  left: [
    { speaker: "User", text: "I need the movie to be Dune ." },
    { speaker: "Assistant", text: "What qty would you like ?" },
    { speaker: "User", text: "I need the qty to be 2 ." },
    { speaker: "Assistant", text: "Your request is confirmed ." },
  ],
  right: [
    { speaker: "User", text: "I need the movie to be Dune ." },
    { speaker: "Assistant", text: "I could not complete that request ." },
  ],
};

function pairTasks(): BackendTask[] {
  return [
    makeTask("t0", "sysA", "sysB", TURNS),
    makeTask("t1", "sysB", "sysA", TURNS),
  ];
}

function mountSession(backend: MockBackend, annotator: string) {
  const root = document.createElement("div");
  document.body.appendChild(root);
  const client = new ApiClient("http://backend.test", backend.fetch);
  const session = new Session(client, annotator);
  session.onChange(() => render(root, session));
  render(root, session);
  return { root, session };
}

function clickSubmit(root: HTMLElement): void {
  const button = root.querySelector<HTMLButtonElement>("button.submit");
  expect(button).not.toBeNull();
  button!.click();
}

function chooseRadio(root: HTMLElement, value: Choice): void {
  const radio = root.querySelector<HTMLInputElement>(`input[value="${value}"]`);
  expect(radio).not.toBeNull();
  radio!.click();
}

/** Run a full scripted session, choosing per task via `decide`. */
async function runSession(
  backend: MockBackend,
  annotator: string,
  decide: (task: TaskView) => Choice,
): Promise<void> {
  const { root, session } = mountSession(backend, annotator);
  await session.start();
  while (session.phase === "task" && session.task !== null) {
    chooseRadio(root, decide(session.task));
    await session.submit();
  }
  expect(session.phase).toBe("done");
  root.remove();
}

beforeEach(() => {
  document.body.innerHTML = "";
});

afterEach(() => {
  document.body.innerHTML = "";
});

describe("annotation session", () => {
  it("claims a task and renders one row per visible turn per side", async () => {
    const backend = new MockBackend(pairTasks());
    const { root, session } = mountSession(backend, "alice");
    await session.start();

    expect(session.phase).toBe("task");
    const columns = root.querySelectorAll(".column");
    expect(columns).toHaveLength(2);
    expect(columns[0]!.querySelectorAll(".turn")).toHaveLength(TURNS.left.length);
    expect(columns[1]!.querySelectorAll(".turn")).toHaveLength(TURNS.right.length);

    const labels = [...root.querySelectorAll(".system-label")].map((n) => n.textContent);
    expect(labels).toEqual(["Assistant 1", "Assistant 2"]);
    expect(root.textContent).not.toContain("sysA");
    expect(root.textContent).not.toContain("sysB");
    expect(root.querySelectorAll('input[name="choice"]')).toHaveLength(2);
  });

  it("blocks submit until a side is selected", async () => {
    const backend = new MockBackend(pairTasks());
    const { root, session } = mountSession(backend, "alice");
    await session.start();

    const button = root.querySelector<HTMLButtonElement>("button.submit")!;
    expect(button.disabled).toBe(true);
    await session.submit(); // direct call must be blocked too
    expect(backend.posts).toBe(0);
    expect(session.phase).toBe("task");
    expect(root.textContent).toContain("Pick Assistant 1 or Assistant 2");

    chooseRadio(root, "Left");
    expect(root.querySelector<HTMLButtonElement>("button.submit")!.disabled).toBe(false);
  });

  it("submits exactly one annotation on a rapid double-click", async () => {
    const backend = new MockBackend(pairTasks());
    const { root, session } = mountSession(backend, "alice");
    await session.start();

    chooseRadio(root, "Right");
    const button = root.querySelector<HTMLButtonElement>("button.submit")!;
    button.click();
    button.click(); // second click lands while the first POST is in flight
    await new Promise((resolve) => setTimeout(resolve, 0));
    await new Promise((resolve) => setTimeout(resolve, 0));

    expect(backend.postsFor("t0")).toBe(1);
    expect(backend.posts).toBe(1);
    expect(session.task?.task_id).toBe("t1"); // advanced exactly once
  });

  it("never renders API traffic even if a payload slips through", async () => {
    const leaky = makeTask("t9", "sysA", "sysB", {
      left: [
        { speaker: "User", text: "I need the movie to be Dune ." },
        { speaker: "Assistant", text: "APICALL: api_name = BuyTicket ; movie = Dune" },
        { speaker: "Assistant", text: "APIRESP: API_FAIL" },
        { speaker: "Assistant", text: "Your request is confirmed ." },
      ],
      right: TURNS.right,
    });
    const backend = new MockBackend([leaky]);
    const { root, session } = mountSession(backend, "alice");
    await session.start();

    for (const marker of LEAK_MARKERS) {
      expect(document.body.innerHTML).not.toContain(marker);
    }
    const leftRows = root.querySelectorAll(".column")[0]!.querySelectorAll(".turn");
    expect(leftRows).toHaveLength(2); // the two leaky turns were dropped
  });

  it("supports keyboard shortcuts 1/2 for choosing a side", async () => {
    const backend = new MockBackend(pairTasks());
    globalThis.fetch = backend.fetch as typeof fetch;
    const root = document.createElement("div");
    document.body.appendChild(root);
    const session = bootstrap(root, {
      baseUrl: "http://backend.test",
      annotatorId: "alice",
    });
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(session.phase).toBe("task");

    window.dispatchEvent(new KeyboardEvent("keydown", { key: "2" }));
    expect(session.choice).toBe("Right");
    window.dispatchEvent(new KeyboardEvent("keydown", { key: "1" }));
    expect(session.choice).toBe("Left");
    const checked = root.querySelector<HTMLInputElement>('input[value="Left"]');
    expect(checked!.checked).toBe(true);
  });

  it("shows a retry state when the backend is down and recovers", async () => {
    const backend = new MockBackend(pairTasks());
    backend.offline = true;
    const { root, session } = mountSession(backend, "alice");
    await session.start();

    expect(session.phase).toBe("error");
    expect(root.textContent).toContain("Backend unreachable");
    expect(root.querySelector("button.retry")).not.toBeNull();

    backend.offline = false;
    root.querySelector<HTMLButtonElement>("button.retry")!.click();
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(session.phase).toBe("task");
  });

  it("queues an offline submission and delivers it exactly once", async () => {
    const backend = new MockBackend(pairTasks());
    const { root, session } = mountSession(backend, "alice");
    await session.start();
    expect(session.task?.task_id).toBe("t0");

    backend.offline = true;
    chooseRadio(root, "Left");
    await session.submit();
    expect(session.phase).toBe("error");
    expect(root.textContent).toContain("saved");
    expect(backend.postsFor("t0")).toBe(0);

    backend.offline = false;
    await session.retry(); // flushes the queue, then claims the next task
    expect(backend.postsFor("t0")).toBe(1);
    expect(session.phase).toBe("task");
    expect(session.task?.task_id).toBe("t1");

    chooseRadio(root, "Right");
    await session.submit();
    expect(session.phase).toBe("done");
    expect(backend.postsFor("t0")).toBe(1); // never re-delivered
    expect(backend.annotations).toHaveLength(2);
  });

  it("reaches the all-done state when no tasks remain", async () => {
    const backend = new MockBackend([]);
    const { root, session } = mountSession(backend, "alice");
    await session.start();
    expect(session.phase).toBe("done");
    expect(root.textContent).toContain("All done");
  });
});

describe("control gating end to end", () => {
  function gatedFixture(): MockBackend {
    return new MockBackend([
      makeTask("c0", "gold", "repetitive", TURNS, { goldSide: "Left" }),
      ...pairTasks(),
    ]);
  }

  function preferSys(target: string): (task: TaskView) => Choice {
    const sides: Record<string, { left: string; right: string }> = {
      t0: { left: "sysA", right: "sysB" },
      t1: { left: "sysB", right: "sysA" },
    };
    return (task) => {
      if (task.task_id === "c0") {
        throw new Error("decide() must not see control routing");
      }
      return sides[task.task_id]!.left === target ? "Left" : "Right";
    };
  }

  it("serves the control first and excludes control failures from the win matrix", async () => {
    const backend = gatedFixture();

    // "good" passes the control (gold is Left) and always prefers sysB.
    const goodDecide = preferSys("sysB");
    await runSession(backend, "good", (task) =>
      task.task_id === "c0" ? "Left" : goodDecide(task),
    );
    // "bad" picks the repetitive side of the control, then votes sysA.
    const badDecide = preferSys("sysA");
    await runSession(backend, "bad", (task) =>
      task.task_id === "c0" ? "Right" : badDecide(task),
    );

    // Controls-first serving: each annotator's first annotation is c0.
    for (const who of ["good", "bad"]) {
      const first = backend.annotations.find((a) => a.annotator_id === who);
      expect(first?.task_id).toBe("c0");
    }

    const matrix = backend.winMatrix();
    // Only "good"'s two sysB votes count; "bad"'s sysA votes are gated out.
    expect(matrix.get("sysB>sysA")).toEqual({ wins: 2, n: 2 });
    expect(matrix.get("sysA>sysB")).toEqual({ wins: 0, n: 2 });
  });

  it("keeps both annotators when everyone passes the control", async () => {
    const backend = gatedFixture();
    for (const who of ["p1", "p2"]) {
      const decide = preferSys("sysA");
      await runSession(backend, who, (task) =>
        task.task_id === "c0" ? "Left" : decide(task),
      );
    }
    expect(backend.winMatrix().get("sysA>sysB")).toEqual({ wins: 4, n: 4 });
  });
});
