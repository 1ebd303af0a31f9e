import type { HeartbeatEvent, IncidentNotification } from "../types.js";

/**
 * Render one incident notification as a card.
 *
 * The server-rendered text is displayed verbatim (textContent, never
 * re-templated or re-punctuated) so visibility policy stays server-side.
 * The evidence link appears only when the server granted portions_link.
 */
export function renderIncidentCard(
  notification: IncidentNotification,
  doc: Document,
): HTMLElement {
  const card = doc.createElement("article");
  card.className = "incident-card";
  if (notification.mechanism) {
    card.dataset.mechanism = notification.mechanism;
  }
  if (notification.exec_id) {
    card.dataset.execId = notification.exec_id;
  }

  const text = doc.createElement("p");
  text.className = "incident-text";
  text.textContent = notification.text;
  card.appendChild(text);

  if (notification.evidence_access === "portions_link" && notification.evidence_url) {
    const link = doc.createElement("a");
    link.className = "evidence-link";
    link.href = notification.evidence_url;
    link.textContent = "See the flagged portions";
    card.appendChild(link);
  }
  return card;
}

/** Liveness warning card for add-on heartbeat status changes. */
export function renderLivenessCard(event: HeartbeatEvent, doc: Document): HTMLElement {
  const card = doc.createElement("article");
  card.className = "incident-card liveness-card";
  card.dataset.status = event.status;
  const text = doc.createElement("p");
  text.className = "incident-text";
  text.textContent =
    event.status === "unresponsive"
      ? `The safety add-on for ${event.member_id} stopped responding.`
      : `The safety add-on for ${event.member_id} is responding again.`;
  card.appendChild(text);
  return card;
}
