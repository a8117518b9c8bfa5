// Keeps responses in submission order: each request gets a monotonically
// increasing id, and only the newest id is allowed to settle into the view.
// Superseded requests are aborted, so at most one is ever in flight.

export class RequestSequencer {
  private nextId = 0;
  private latestId = 0;
  private controller: AbortController | undefined;

  /** Start a request; returns its id and an abort signal for fetch. */
  begin(): { id: number; signal: AbortSignal } {
    this.controller?.abort();
    this.controller = new AbortController();
    this.nextId += 1;
    this.latestId = this.nextId;
    return { id: this.nextId, signal: this.controller.signal };
  }

  /** True when a response for `id` is still the newest one requested. */
  isCurrent(id: number): boolean {
    return id === this.latestId;
  }

  /** Drop everything in flight (e.g. when the editor empties). */
  invalidate(): void {
    this.controller?.abort();
    this.controller = undefined;
    this.nextId += 1;
    this.latestId = this.nextId;
  }
}
