"""Synthetic interaction generators with known planted structure.

Users carry a small set of preferred attributes and walk a sticky Markov
chain over them; each step interacts with a random item of the current
attribute. The next attribute is therefore predictable from the recent
history, which gives learning-signal oracles: a good attribute predictor
approaches the chain's stay probability, and a good recommender
concentrates relevance on the current attribute's items.
"""

from __future__ import annotations

from .data import InteractionEvent
from .rng import RngState


def planted_events(
    rng: RngState,
    num_users: int = 200,
    num_items: int = 50,
    num_attrs: int = 5,
    seq_len: int = 60,
    prefs_per_user: int = 2,
    stay_prob: float = 0.9,
) -> list[InteractionEvent]:
    """Single-attribute items assigned round-robin; sticky preference walk."""
    item_attr = [i % num_attrs for i in range(num_items)]
    items_of_attr = [
        [i for i in range(num_items) if item_attr[i] == a] for a in range(num_attrs)
    ]
    events = []
    for user in range(num_users):
        prefs = sorted(rng.choice(num_attrs, prefs_per_user, replace=False).tolist())
        state = int(rng.integers(0, prefs_per_user))
        for t in range(seq_len):
            if prefs_per_user > 1 and rng.random() > stay_prob:
                state = (state + 1 + int(rng.integers(0, prefs_per_user - 1))) % (
                    prefs_per_user
                )
            attr = prefs[state]
            pool = items_of_attr[attr]
            item = pool[int(rng.integers(0, len(pool)))]
            events.append(
                InteractionEvent(user, item, float(t), frozenset([attr]))
            )
    return events


def multi_attribute_events(
    rng: RngState,
    num_users: int = 300,
    num_items: int = 200,
    num_attrs: int = 12,
    seq_len: int = 80,
    prefs_per_user: int = 2,
    stay_prob: float = 0.85,
    max_extra_attrs: int = 2,
) -> list[InteractionEvent]:
    """Movie-style variant: items carry 1..1+max_extra_attrs attributes.

    Each item has a primary attribute (round-robin) plus random extras;
    the preference walk targets primary attributes.
    """
    attrs_of_item = []
    for i in range(num_items):
        primary = i % num_attrs
        extras = set()
        n_extra = int(rng.integers(0, max_extra_attrs + 1))
        while len(extras) < n_extra:
            cand = int(rng.integers(0, num_attrs))
            if cand != primary:
                extras.add(cand)
        attrs_of_item.append(frozenset({primary} | extras))
    items_of_primary = [
        [i for i in range(num_items) if i % num_attrs == a] for a in range(num_attrs)
    ]
    events = []
    for user in range(num_users):
        prefs = sorted(rng.choice(num_attrs, prefs_per_user, replace=False).tolist())
        state = int(rng.integers(0, prefs_per_user))
        for t in range(seq_len):
            if prefs_per_user > 1 and rng.random() > stay_prob:
                state = (state + 1 + int(rng.integers(0, prefs_per_user - 1))) % (
                    prefs_per_user
                )
            pool = items_of_primary[prefs[state]]
            item = pool[int(rng.integers(0, len(pool)))]
            events.append(InteractionEvent(user, item, float(t), attrs_of_item[item]))
    return events
