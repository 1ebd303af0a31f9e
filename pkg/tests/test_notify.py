"""Notification rendering (string-exact), delivery channels, and flags."""

import pytest

from cfas.notify import (
    QUEUE_CAPACITY,
    ChannelRegistry,
    EvidenceAccess,
    FlagClaim,
    FlagDirection,
    FlagReport,
    NotificationIntent,
    Notifier,
    Recipient,
    Severity,
    render,
)
from cfas.policy import DataClass, Level, MechanismKind

from .conftest import make_policy


def intent(mechanism=MechanismKind.CYBERBULLYING, perpetrator=None, data_class=DataClass.CHAT):
    return NotificationIntent(
        mechanism=mechanism,
        child_member_id="child-1",
        household_id="household-1",
        data_class=data_class,
        perpetrator=perpetrator,
        evidence_refs=[],
        severity=Severity.WARNING,
        exec_id="exec-42",
    )


def custodian_text(policy, perp=None, mechanism=MechanismKind.CYBERBULLYING):
    rendered = render(intent(mechanism, perpetrator=perp), policy, "John")
    return next(r for r in rendered if r.recipient is Recipient.CUSTODIAN)


# Expected custodian strings per (level, perpetrator known, class selected).
# The class selection gates data visibility through scope_check, not the
# incident sentence itself, so the selected/unselected renderings coincide.
TEMPLATE_MATRIX = [
    (Level.L1, None, False, "John might be a victim of cyberbullying.", EvidenceAccess.NONE),
    (Level.L1, None, True, "John might be a victim of cyberbullying.", EvidenceAccess.NONE),
    (Level.L1, "Eve", False, "John might be a victim of cyberbullying.", EvidenceAccess.NONE),
    (Level.L1, "Eve", True, "John might be a victim of cyberbullying.", EvidenceAccess.NONE),
    (Level.L2, None, False, "John might be a victim of cyberbullying.", EvidenceAccess.NONE),
    (Level.L2, None, True, "John might be a victim of cyberbullying.", EvidenceAccess.NONE),
    (Level.L2, "Eve", False, "John might be a victim of cyberbullying by Eve", EvidenceAccess.NAMES_ONLY),
    (Level.L2, "Eve", True, "John might be a victim of cyberbullying by Eve", EvidenceAccess.NAMES_ONLY),
    (
        Level.L3,
        None,
        False,
        "John might be a victim of cyberbullying. Click here to see the suspicious chat",
        EvidenceAccess.PORTIONS_LINK,
    ),
    (
        Level.L3,
        None,
        True,
        "John might be a victim of cyberbullying. Click here to see the suspicious chat",
        EvidenceAccess.PORTIONS_LINK,
    ),
    (
        Level.L3,
        "Eve",
        False,
        "John might be a victim of cyberbullying by Eve. Click here to see the suspicious chat",
        EvidenceAccess.PORTIONS_LINK,
    ),
    (
        Level.L3,
        "Eve",
        True,
        "John might be a victim of cyberbullying by Eve. Click here to see the suspicious chat",
        EvidenceAccess.PORTIONS_LINK,
    ),
]


@pytest.mark.parametrize("level,perp,selected,expected,access", TEMPLATE_MATRIX)
def test_template_matrix_string_exact(level, perp, selected, expected, access):
    selections = {DataClass.FB_WALL} if selected else frozenset()
    policy = make_policy(parental_level=level, parental_selections=selections)
    rendered = custodian_text(policy, perp)
    assert rendered.text == expected
    assert rendered.evidence_access is access


def test_l1_rendering_contains_no_perpetrator_substring():
    policy = make_policy(parental_level=Level.L1)
    rendered = custodian_text(policy, perp="Eve")
    assert "Eve" not in rendered.text


def test_l3_evidence_url_points_at_exec():
    policy = make_policy(parental_level=Level.L3)
    rendered = custodian_text(policy, perp="Eve")
    assert rendered.evidence_url == "/notify/evidence/exec-42"


def test_l2_without_evidence_link():
    policy = make_policy(parental_level=Level.L2)
    rendered = custodian_text(policy, perp="Eve")
    assert rendered.evidence_url is None


def test_child_advisory_uses_child_name():
    policy = make_policy()
    rendered = render(intent(MechanismKind.GROOMING), policy, "John")
    child = next(r for r in rendered if r.recipient is Recipient.CHILD)
    assert "John" in child.text


def test_every_mechanism_has_a_phrase():
    policy = make_policy(parental_level=Level.L2)
    for mechanism in MechanismKind:
        rendered = render(intent(mechanism, perpetrator="Eve"), policy, "John")
        custodian = next(r for r in rendered if r.recipient is Recipient.CUSTODIAN)
        assert custodian.text.startswith("John might be a victim of ")
        assert custodian.text.endswith(" by Eve")


class TestChannels:
    def test_backlog_is_drained_on_connect(self):
        channels = ChannelRegistry()
        channels.deliver("m1", {"n": 1})
        channels.deliver("m1", {"n": 2})
        q = channels.connect("m1")
        assert [q.get_nowait()["n"] for _ in range(2)] == [1, 2]

    def test_sequence_is_per_member_and_monotonic(self):
        channels = ChannelRegistry()
        r1 = channels.deliver("m1", {})
        r2 = channels.deliver("m1", {})
        other = channels.deliver("m2", {})
        assert (r1.seq, r2.seq) == (1, 2)
        assert other.seq == 1

    def test_queue_bounded_oldest_dropped(self):
        channels = ChannelRegistry(capacity=5)
        for n in range(8):
            channels.deliver("m1", {"n": n})
        q = channels.connect("m1")
        survivors = []
        while not q.empty():
            survivors.append(q.get_nowait()["n"])
        assert survivors == [3, 4, 5, 6, 7]
        assert QUEUE_CAPACITY == 1000


class TestNotifier:
    def test_notify_delivers_child_then_custodian(self):
        notifier = Notifier()
        policy = make_policy(parental_level=Level.L2)
        receipts = notifier.notify(intent(perpetrator="Eve"), policy)
        assert [r.member_id for r in receipts] == ["child-1", "parent-1"]

    def test_flag_forwarded_only_with_backend_scope(self):
        forwarded = []
        notifier = Notifier(forward_flag=forwarded.append)
        report = FlagReport(
            member_id="child-1",
            target_ref="event-1",
            claim=FlagClaim.CYBERBULLYING,
            direction=FlagDirection.MISSED_DETECTION,
            data_class=DataClass.CHAT,
        )
        notifier.submit_flag(report, make_policy())  # backend L1 -> deny
        assert forwarded == []
        notifier2 = Notifier(forward_flag=forwarded.append)
        notifier2.submit_flag(report, make_policy(backend_level=Level.L3))
        assert forwarded == [report]

    def test_flag_persisted_even_when_not_forwarded(self):
        notifier = Notifier()
        report = FlagReport(
            member_id="child-1",
            target_ref="event-1",
            claim=FlagClaim.GROOMING,
            direction=FlagDirection.WRONG_DETECTION,
        )
        notifier.submit_flag(report, make_policy())
        assert notifier.flags() == [report]

    def test_flag_unknown_target_rejected(self):
        notifier = Notifier(target_exists=lambda ref: False)
        report = FlagReport(
            member_id="child-1",
            target_ref="missing",
            claim=FlagClaim.GROOMING,
            direction=FlagDirection.WRONG_DETECTION,
        )
        with pytest.raises(KeyError):
            notifier.submit_flag(report, make_policy())
