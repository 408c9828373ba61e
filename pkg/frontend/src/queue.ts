/** Runs async tasks strictly one after another in submission order. Label
 *  posts go through a single queue so rapid clicks reach the service in the
 *  order they happened, each click as exactly one post. A failed task does
 *  not stall the queue. */
export class SerialQueue {
  private tail: Promise<unknown> = Promise.resolve();

  enqueue<T>(task: () => Promise<T>): Promise<T> {
    const run = () => task();
    const next = this.tail.then(run, run);
    this.tail = next.then(
      () => undefined,
      () => undefined,
    );
    return next;
  }

  /** Resolves once everything enqueued so far has settled. */
  idle(): Promise<void> {
    return this.tail.then(
      () => undefined,
      () => undefined,
    );
  }
}
