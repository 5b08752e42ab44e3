/**
 * One-task-at-a-time annotation session.
 *
 * Phases: loading -> task -> submitting -> (loading | done | error).
 * Submit is blocked until a side is chosen, and a per-task guard makes a
 * rapid double-click produce exactly one POST. The session never holds more
 * than one claimed task.
 */

import { Annotation, ApiClient, ApiError, Choice, TaskView } from "./api.js";

export type Phase = "loading" | "task" | "submitting" | "done" | "error";

export interface SessionSnapshot {
  phase: Phase;
  task: TaskView | null;
  choice: Choice | null;
  rationale: string;
  message: string;
  pending: number;
}

type Listener = (snapshot: SessionSnapshot) => void;

export class Session {
  phase: Phase = "loading";
  task: TaskView | null = null;
  choice: Choice | null = null;
  rationale = "";
  message = "";

  private readonly submittedTaskIds = new Set<string>();
  private readonly listeners: Listener[] = [];

  constructor(
    private readonly client: ApiClient,
    readonly annotatorId: string,
  ) {}

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  snapshot(): SessionSnapshot {
    return {
      phase: this.phase,
      task: this.task,
      choice: this.choice,
      rationale: this.rationale,
      message: this.message,
      pending: this.client.pending,
    };
  }

  async start(): Promise<void> {
    await this.advance();
  }

  /** Recover from the error state: sync the offline queue, claim again. */
  async retry(): Promise<void> {
    await this.advance();
  }

  select(choice: Choice): void {
    if (this.phase !== "task") {
      return;
    }
    this.choice = choice;
    this.message = "";
    this.emit();
  }

  setRationale(text: string): void {
    this.rationale = text;
  }

  async submit(): Promise<void> {
    if (this.phase !== "task" || this.task === null) {
      return;
    }
    if (this.choice === null) {
      this.message = "Pick Assistant 1 or Assistant 2 before submitting.";
      this.emit();
      return;
    }
    const task = this.task;
    if (this.submittedTaskIds.has(task.task_id)) {
      return; // double-click: first submit is already in flight
    }
    this.submittedTaskIds.add(task.task_id);
    const annotation: Annotation = {
      task_id: task.task_id,
      annotator_id: this.annotatorId,
      choice: this.choice,
      rationale: this.rationale,
    };
    this.phase = "submitting";
    this.emit();
    let outcome: "sent" | "queued";
    try {
      outcome = await this.client.submitOrQueue(annotation);
    } catch (err) {
      this.phase = "error";
      this.message = describeFailure(err);
      this.emit();
      return;
    }
    if (outcome === "queued") {
      this.message =
        "Backend unreachable — your judgment is saved and will sync on retry.";
      this.phase = "error";
      this.task = null;
      this.emit();
      return;
    }
    await this.advance();
  }

  private async advance(): Promise<void> {
    this.phase = "loading";
    this.task = null;
    this.choice = null;
    this.rationale = "";
    this.emit();
    try {
      if (this.client.pending > 0) {
        await this.client.flush();
      }
      if (this.client.pending > 0) {
        throw new TypeError("offline queue not drained");
      }
      const task = await this.client.nextTask(this.annotatorId);
      if (task === null) {
        this.phase = "done";
      } else {
        this.task = task;
        this.phase = "task";
        this.message = "";
      }
    } catch (err) {
      this.phase = "error";
      this.message = describeFailure(err);
    }
    this.emit();
  }

  private emit(): void {
    const snapshot = this.snapshot();
    for (const listener of this.listeners) {
      listener(snapshot);
    }
  }
}

function describeFailure(err: unknown): string {
  if (err instanceof ApiError) {
    const kind = err.status >= 500 ? "server error" : "request rejected";
    return `Backend ${kind} (HTTP ${err.status}) — retry or contact the operator.`;
  }
  return "Backend unreachable — check your connection and retry.";
}
