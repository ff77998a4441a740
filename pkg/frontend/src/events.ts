/**
 * Server-sent event consumer with automatic reconnection.
 *
 * The server pushes {kind, payload} objects; subscribers receive them in
 * arrival order. On stream loss the wrapper reports disconnected status,
 * waits, and opens a fresh EventSource.
 */

export interface StreamEvent {
  kind: string;
  payload: Record<string, unknown>;
}

export interface EventSourceLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  onopen: ((ev: unknown) => void) | null;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

const defaultFactory: EventSourceFactory = (url) =>
  new EventSource(url) as unknown as EventSourceLike;

export class EventStream {
  private source: EventSourceLike | null = null;
  private listeners: ((ev: StreamEvent) => void)[] = [];
  private statusListeners: ((connected: boolean) => void)[] = [];
  private closed = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private factory: EventSourceFactory = defaultFactory,
    private retryMs = 2000,
  ) {}

  onEvent(cb: (ev: StreamEvent) => void): void {
    this.listeners.push(cb);
  }

  onStatus(cb: (connected: boolean) => void): void {
    this.statusListeners.push(cb);
  }

  connect(): void {
    if (this.closed) return;
    this.source = this.factory(this.url);
    this.source.onopen = () => this.emitStatus(true);
    this.source.onmessage = (ev) => {
      let parsed: StreamEvent;
      try {
        parsed = JSON.parse(ev.data) as StreamEvent;
      } catch {
        return; // keepalives and malformed frames are dropped
      }
      for (const cb of this.listeners) cb(parsed);
    };
    this.source.onerror = () => {
      this.emitStatus(false);
      this.source?.close();
      this.source = null;
      if (!this.closed && this.retryTimer === null) {
        this.retryTimer = setTimeout(() => {
          this.retryTimer = null;
          this.connect();
        }, this.retryMs);
      }
    };
  }

  close(): void {
    this.closed = true;
    if (this.retryTimer !== null) clearTimeout(this.retryTimer);
    this.source?.close();
    this.source = null;
  }

  private emitStatus(connected: boolean): void {
    for (const cb of this.statusListeners) cb(connected);
  }
}
