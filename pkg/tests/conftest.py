import io

import numpy as np
import pytest
from PIL import Image

from cfas.detectors.rules import load_rule_tables
from cfas.policy import (
    BackendVisibility,
    CybersafetyConfig,
    HouseholdMember,
    Level,
    MechanismKind,
    OptionChange,
    OptionKind,
    ParentalVisibility,
    PolicyState,
    Role,
)


@pytest.fixture(scope="session")
def tables():
    return load_rule_tables()


def make_members():
    return [
        HouseholdMember("child-1", Role.CHILD, "Casey", avatar_choice="fox"),
        HouseholdMember("parent-1", Role.CUSTODIAN, "Pat"),
    ]


def make_policy(
    parental_level=Level.L1,
    parental_selections=frozenset(),
    backend_level=Level.L1,
    backend_selections=frozenset(),
    anonymize=True,
    cybersafety_level=Level.L1,
    enforce=frozenset(),
) -> PolicyState:
    """A policy snapshot at arbitrary levels, bypassing the consent flow
    (for unit tests of consumers; the consent flow has its own tests)."""
    return PolicyState(
        household_id="household-1",
        members=make_members(),
        parental=ParentalVisibility(level=parental_level, l2_selections=frozenset(parental_selections)),
        backend=BackendVisibility(
            level=backend_level, l2_selections=frozenset(backend_selections), anonymize=anonymize
        ),
        cybersafety=CybersafetyConfig(
            level=cybersafety_level,
            enforce_mechanisms=frozenset(enforce),
        ),
    )


def png_bytes(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(pixels.astype(np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def solid_png(rgb, size=(32, 32)) -> bytes:
    h, w = size
    pixels = np.zeros((h, w, 3), dtype=np.uint8)
    pixels[..., 0], pixels[..., 1], pixels[..., 2] = rgb
    return png_bytes(pixels)


def random_png(rng: np.random.Generator, width: int, height: int) -> bytes:
    return png_bytes(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))


def parental_option(level, selections=frozenset()):
    return OptionChange(
        kind=OptionKind.PARENTAL,
        parental=ParentalVisibility(level=level, l2_selections=frozenset(selections)),
    )


def backend_option(level, selections=frozenset(), anonymize=True):
    return OptionChange(
        kind=OptionKind.BACKEND,
        backend=BackendVisibility(
            level=level, l2_selections=frozenset(selections), anonymize=anonymize
        ),
    )


def cybersafety_option(level, enforce=frozenset()):
    return OptionChange(
        kind=OptionKind.CYBERSAFETY,
        cybersafety=CybersafetyConfig(
            level=level,
            enforce_mechanisms=frozenset(enforce),
        ),
    )


ALL_MECHS = frozenset(MechanismKind)
