"""
CycleGAN loss terms in minimization form.

Generators and discriminators are passed as callables (DiffValue batch in,
DiffValue out), so any stub can stand in for a network.
"""

from typing import Callable, Dict, Tuple

from core.losses import bce_with_logits, l1_loss
from core.tensor import DiffValue

Mapping = Callable[[DiffValue], DiffValue]


def loss_gen(discriminator: Mapping, generator: Mapping, x) -> DiffValue:
    """Non-saturating adversarial loss: BCE of D(G(x)) against "real"."""
    return bce_with_logits(discriminator(generator(x)), 1.0)


def loss_disc(discriminator: Mapping, y, fake: DiffValue) -> DiffValue:
    """BCE(D(y), real) + BCE(D(fake), fake); fakes are detached first."""
    real_term = bce_with_logits(discriminator(y), 1.0)
    fake_term = bce_with_logits(discriminator(fake.detach()), 0.0)
    return real_term + fake_term


def loss_cycle(G: Mapping, F: Mapping, x, y) -> DiffValue:
    """mean|F(G(x)) − x| + mean|G(F(y)) − y|"""
    return l1_loss(F(G(x)), x) + l1_loss(G(F(y)), y)


def loss_identity(G: Mapping, x, y) -> DiffValue:
    """mean|G(y) − y| + mean|G(x) − x|"""
    return l1_loss(G(y), y) + l1_loss(G(x), x)


def weighted_objective(gen: DiffValue, cycle: DiffValue, identity: DiffValue, lambda1: float, lambda2: float):
    return gen + cycle * lambda1 + identity * lambda2


def memoized(mapping: Mapping) -> Mapping:
    """Evaluate mapping once per input object; repeated calls reuse the result."""
    cache: Dict[int, Tuple[object, DiffValue]] = {}

    def call(x):
        entry = cache.get(id(x))
        if entry is None:
            entry = (x, mapping(x))
            cache[id(x)] = entry
        return entry[1]

    return call


def full_generator_objective(
    G: Mapping, F: Mapping, D_X: Mapping, D_Y: Mapping, x, y, lambda1: float, lambda2: float
) -> Tuple[DiffValue, Dict[str, DiffValue]]:
    """
    Joint objective of both generators.

        L_gen(G, D_Y) + L_gen(F, D_X) + λ1·L_cyc + λ2·(L_id(G) + L_id(F))

    G(x) and F(y) are computed once and shared between the terms.

    Returns:
        (total, components) with components gen_g, gen_f, cycle, identity
    """
    G, F = memoized(G), memoized(F)
    gen_g = loss_gen(D_Y, G, x)
    gen_f = loss_gen(D_X, F, y)
    cycle = loss_cycle(G, F, x, y)
    identity = loss_identity(G, x, y) + loss_identity(F, x, y)
    total = weighted_objective(gen_g + gen_f, cycle, identity, lambda1, lambda2)
    return total, {"gen_g": gen_g, "gen_f": gen_f, "cycle": cycle, "identity": identity}
