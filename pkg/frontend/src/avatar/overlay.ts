import { FallbackClient, IwpClient } from "../api.js";
import { NotifyStream, type EventSource, type StreamHandlers } from "../stream.js";
import {
  isConsentRequest,
  isIncident,
  type ConsentRequestEvent,
  type FlagSubmission,
  type IncidentNotification,
  type PolicyView,
  type StreamEvent,
} from "../types.js";

export interface OverlayOptions {
  heartbeatIntervalMs?: number;
  avatarIcon?: string;
  /** Override stream construction (tests inject a mocked stream here). */
  streamFactory?: (handlers: StreamHandlers) => EventSource;
  /** Back-end fallback used when the IWP push stream is unreachable. */
  fallback?: FallbackClient;
}

/**
 * The Guardian Avatar overlay: chat-bubble warnings, consent approvals, a
 * flag menu, a visibility summary, and 10-second heartbeats. It is a pure
 * client of the IWP HTTP API — removing it never weakens enforcement, which
 * lives in the proxy.
 */
export class AvatarOverlay {
  readonly container: HTMLElement;
  readonly bubbles: HTMLElement;
  private readonly summaryEl: HTMLElement;
  private stream: EventSource | null = null;
  private heartbeatTimer: ReturnType<typeof setInterval> | null = null;
  private readonly flagQueue: FlagSubmission[] = [];
  private readonly heartbeatIntervalMs: number;

  constructor(
    private readonly client: IwpClient,
    private readonly memberId: string,
    private readonly doc: Document,
    private readonly options: OverlayOptions = {},
  ) {
    this.heartbeatIntervalMs = options.heartbeatIntervalMs ?? 10_000;
    this.container = doc.createElement("div");
    this.container.id = "cfas-avatar";
    this.container.dataset.icon = options.avatarIcon ?? "fox";
    this.bubbles = doc.createElement("div");
    this.bubbles.className = "avatar-bubbles";
    this.summaryEl = doc.createElement("div");
    this.summaryEl.className = "visibility-summary";
    this.container.append(this.bubbles, this.summaryEl);
  }

  attach(): void {
    this.doc.body.appendChild(this.container);
    const handlers: StreamHandlers = {
      onEvent: (ev) => this.handleEvent(ev),
      onOpen: () => void this.flushFlagQueue(),
    };
    this.stream = this.options.streamFactory
      ? this.options.streamFactory(handlers)
      : new NotifyStream(this.client.base, this.memberId, handlers);
    void this.client.heartbeat(this.memberId).catch(() => undefined);
    this.heartbeatTimer = setInterval(() => {
      void this.client.heartbeat(this.memberId).catch(() => undefined);
    }, this.heartbeatIntervalMs);
    void this.client
      .getPolicy()
      .then((policy) => this.renderVisibilitySummary(policy))
      .catch(() => undefined);
  }

  /** Remove the overlay entirely: DOM, heartbeats, and stream subscription. */
  destroy(): void {
    this.stream?.close();
    this.stream = null;
    if (this.heartbeatTimer !== null) {
      clearInterval(this.heartbeatTimer);
      this.heartbeatTimer = null;
    }
    this.container.remove();
  }

  handleEvent(ev: StreamEvent): void {
    if (isConsentRequest(ev)) {
      this.renderConsentDialog(ev);
      return;
    }
    if (isIncident(ev)) {
      this.renderBubble(ev);
    }
  }

  // -- chat bubbles ----------------------------------------------------------

  private renderBubble(notification: IncidentNotification): void {
    const bubble = this.doc.createElement("div");
    bubble.className = "avatar-bubble";
    if (notification.mechanism) {
      bubble.dataset.mechanism = notification.mechanism;
    }

    const text = this.doc.createElement("p");
    text.className = "bubble-text";
    text.textContent = notification.text;
    bubble.appendChild(text);

    const dismiss = this.doc.createElement("button");
    dismiss.className = "bubble-dismiss";
    dismiss.textContent = "Got it";
    dismiss.addEventListener("click", () => bubble.remove());

    const more = this.doc.createElement("button");
    more.className = "bubble-more";
    more.textContent = "Tell me more";

    const accurate = this.doc.createElement("button");
    accurate.className = "bubble-feedback-accurate";
    accurate.textContent = "That was right";
    accurate.addEventListener("click", () => bubble.remove());

    const notAccurate = this.doc.createElement("button");
    notAccurate.className = "bubble-feedback-wrong";
    notAccurate.textContent = "That was wrong";
    notAccurate.addEventListener("click", () => {
      void this.flagContent({
        member_id: this.memberId,
        target_ref: notification.exec_id ?? "unknown",
        claim: this.claimForMechanism(notification.mechanism),
        direction: "wrong_detection",
      });
      bubble.remove();
    });

    bubble.append(dismiss, more, accurate, notAccurate);
    this.bubbles.appendChild(bubble);
  }

  private claimForMechanism(mechanism?: string): FlagSubmission["claim"] {
    switch (mechanism) {
      case "grooming":
        return "grooming";
      case "sensitive_image":
      case "hateful_meme":
        return "sensitive_image";
      case "fake_activity":
      case "bot_account":
      case "fake_profile":
        return "fake_identity";
      default:
        return "cyberbullying";
    }
  }

  // -- consent ---------------------------------------------------------------

  private renderConsentDialog(request: ConsentRequestEvent): void {
    const dialog = this.doc.createElement("div");
    dialog.className = "consent-dialog";
    dialog.dataset.recordId = request.record_id;

    const text = this.doc.createElement("p");
    text.className = "consent-text";
    text.textContent = `${request.proposed_by} asked to change the ${request.option.kind} settings. Is that okay?`;
    dialog.appendChild(text);

    const decide = (approve: boolean) => async () => {
      const policy = await this.client.decideConsent(this.memberId, request.record_id, approve);
      this.renderVisibilitySummary(policy);
      dialog.remove();
      this.container.dispatchEvent(
        new this.doc.defaultView!.CustomEvent("consent-decided", {
          detail: { recordId: request.record_id, approve, policy },
        }),
      );
    };

    const approveBtn = this.doc.createElement("button");
    approveBtn.className = "consent-approve";
    approveBtn.textContent = "Yes, that's okay";
    approveBtn.addEventListener("click", () => void decide(true)());

    const rejectBtn = this.doc.createElement("button");
    rejectBtn.className = "consent-reject";
    rejectBtn.textContent = "No";
    rejectBtn.addEventListener("click", () => void decide(false)());

    dialog.append(approveBtn, rejectBtn);
    this.container.appendChild(dialog);
  }

  // -- visibility summary ------------------------------------------------------

  renderVisibilitySummary(policy: PolicyView): void {
    const parental =
      policy.parental.level === "L1"
        ? "your custodian only gets warnings, never names or messages"
        : policy.parental.level === "L2"
          ? `your custodian can see who was involved for: ${policy.parental.l2_selections.join(", ") || "(nothing selected)"}`
          : "your custodian can open the flagged message portions";
    const backend =
      policy.backend.level === "L1"
        ? "nothing leaves the house for analysis"
        : `these may be analyzed off-site: ${policy.backend.l2_selections.join(", ") || "your activity"}`;
    this.summaryEl.textContent = `Right now: ${parental}. ${backend}.`;
  }

  // -- flags -------------------------------------------------------------------

  /** Submit a flag; when offline it is queued and flushed on reconnect. */
  async flagContent(flag: FlagSubmission): Promise<string | null> {
    try {
      const { flag_id } = await this.client.submitFlag(flag);
      return flag_id;
    } catch (err) {
      if (err instanceof TypeError) {
        this.flagQueue.push(flag); // network failure: queue for reconnect
        return null;
      }
      this.toast(err instanceof Error ? err.message : String(err));
      return null;
    }
  }

  async flushFlagQueue(): Promise<void> {
    for (let flag = this.flagQueue[0]; flag !== undefined; flag = this.flagQueue[0]) {
      try {
        await this.client.submitFlag(flag);
        this.flagQueue.shift();
      } catch {
        return; // still offline; keep order and retry on next reconnect
      }
    }
  }

  get queuedFlags(): number {
    return this.flagQueue.length;
  }

  private toast(message: string): void {
    const el = this.doc.createElement("div");
    el.className = "avatar-toast";
    el.textContent = message;
    this.container.appendChild(el);
  }

  // -- fallback mode -------------------------------------------------------------

  /** When the IWP stream is unreachable, post outbound events to the back-end. */
  async analyzeViaFallback(
    eventDoc: Record<string, unknown>,
  ): Promise<Record<string, unknown> | null> {
    if (!this.options.fallback) {
      return null;
    }
    return this.options.fallback.analyze(eventDoc);
  }
}
