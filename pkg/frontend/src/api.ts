/**
 * Thin client for the pairwise-eval REST backend.
 *
 * The only endpoints the UI is allowed to touch:
 *   GET  /api/next-task?annotator=<id>  -> TaskView | {done: true}
 *   POST /api/annotate                  -> 204 (409 on duplicate)
 *
 * Submissions that fail at the network level (backend unreachable) are held
 * in an in-memory queue and flushed once the backend is back; each queued
 * annotation is delivered at most once.
 */

export interface TurnView {
  speaker: string;
  text: string;
}

export interface TaskView {
  task_id: string;
  question: string;
  left_turns: TurnView[];
  right_turns: TurnView[];
}

export type Choice = "Left" | "Right";

export interface Annotation {
  task_id: string;
  annotator_id: string;
  choice: Choice;
  rationale: string;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Backend replied, but with a non-success status. */
export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  private queue: Annotation[] = [];
  private readonly fetchImpl: FetchLike;

  constructor(private readonly baseUrl: string, fetchImpl?: FetchLike) {
    // Bind lazily so tests can swap globalThis.fetch after construction.
    this.fetchImpl = fetchImpl ?? ((url, init) => globalThis.fetch(url, init));
  }

  /** Claim the next task for this annotator; null means nothing left. */
  async nextTask(annotatorId: string): Promise<TaskView | null> {
    const url = `${this.baseUrl}/api/next-task?annotator=${encodeURIComponent(annotatorId)}`;
    const resp = await this.fetchImpl(url);
    if (!resp.ok) {
      throw new ApiError(resp.status, `next-task failed with ${resp.status}`);
    }
    const body = (await resp.json()) as TaskView | { done: boolean };
    if ("done" in body && body.done) {
      return null;
    }
    return body as TaskView;
  }

  /** POST one annotation. A 409 means the server already has it. */
  async annotate(annotation: Annotation): Promise<void> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/annotate`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(annotation),
    });
    if (!resp.ok && resp.status !== 409) {
      throw new ApiError(resp.status, `annotate failed with ${resp.status}`);
    }
  }

  /**
   * Try to deliver; on network failure park the annotation in the offline
   * queue instead. Server-side errors (4xx/5xx) are not queueable and are
   * rethrown for the UI to surface.
   */
  async submitOrQueue(annotation: Annotation): Promise<"sent" | "queued"> {
    try {
      await this.annotate(annotation);
      return "sent";
    } catch (err) {
      if (err instanceof ApiError) {
        throw err;
      }
      this.enqueue(annotation);
      return "queued";
    }
  }

  /** Number of annotations waiting for the backend to come back. */
  get pending(): number {
    return this.queue.length;
  }

  /**
   * Deliver queued annotations in order. Stops (without losing anything) if
   * the backend is still unreachable; returns how many were delivered.
   */
  async flush(): Promise<number> {
    let delivered = 0;
    while (this.queue.length > 0) {
      const head = this.queue[0]!;
      try {
        await this.annotate(head);
      } catch (err) {
        if (err instanceof ApiError) {
          throw err;
        }
        return delivered;
      }
      this.queue.shift();
      delivered += 1;
    }
    return delivered;
  }

  private enqueue(annotation: Annotation): void {
    const dup = this.queue.some(
      (q) =>
        q.task_id === annotation.task_id &&
        q.annotator_id === annotation.annotator_id,
    );
    if (!dup) {
      this.queue.push(annotation);
    }
  }
}
