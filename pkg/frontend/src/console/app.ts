import { IwpClient } from "../api.js";
import { NotifyStream, type EventSource, type StreamHandlers } from "../stream.js";
import { isHeartbeat, isIncident, type PolicyView, type StreamEvent } from "../types.js";
import { renderIncidentCard, renderLivenessCard } from "./incidents.js";
import { OptionEditor } from "./optionEditor.js";

export interface ConsoleOptions {
  /** Override stream construction (tests inject a mocked stream here). */
  streamFactory?: (handlers: StreamHandlers) => EventSource;
}

/**
 * The Parental Console: policy panel, option editor, and a live incident
 * feed. Renders only what /policy and /notify/stream return; every mutation
 * goes through the documented HTTP API.
 */
export class ConsoleApp {
  readonly feed: HTMLElement;
  readonly editor: OptionEditor;
  private stream: EventSource | null = null;
  private policy: PolicyView | null = null;

  constructor(
    private readonly client: IwpClient,
    private readonly custodianId: string,
    private readonly root: HTMLElement,
    private readonly options: ConsoleOptions = {},
  ) {
    const doc = root.ownerDocument;
    this.editor = new OptionEditor(client, custodianId, doc);
    this.feed = doc.createElement("section");
    this.feed.className = "incident-feed";
    root.append(this.editor.root, this.feed);
  }

  async start(): Promise<void> {
    this.policy = await this.client.getPolicy();
    const handlers: StreamHandlers = { onEvent: (ev) => this.handleEvent(ev) };
    this.stream = this.options.streamFactory
      ? this.options.streamFactory(handlers)
      : new NotifyStream(this.client.base, this.custodianId, handlers);
  }

  stop(): void {
    this.stream?.close();
    this.stream = null;
  }

  currentPolicy(): PolicyView | null {
    return this.policy;
  }

  handleEvent(ev: StreamEvent): void {
    const doc = this.root.ownerDocument;
    if (isHeartbeat(ev)) {
      this.feed.prepend(renderLivenessCard(ev, doc));
      return;
    }
    if (isIncident(ev)) {
      this.feed.prepend(renderIncidentCard(ev, doc));
    }
    // Any pushed event may follow a policy change; refresh the snapshot so
    // pending badges flip without a reload.
    void this.refreshPolicy();
  }

  async refreshPolicy(): Promise<PolicyView> {
    this.policy = await this.client.getPolicy();
    this.editor.reflectPolicy(this.policy);
    return this.policy;
  }
}
