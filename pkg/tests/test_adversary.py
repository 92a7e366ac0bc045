import numpy as np
import pytest
from pydantic import ValidationError

from app.core.constants import PushDirection, StrategyKind
from app.core.models import NodeSnapshot
from app.services.adversary import Adversary, AdversaryContext, StrategyDescriptor


def _plan(adversary, values, round_index=0):
    snapshot = NodeSnapshot(np.asarray(values, dtype=np.float64), round_index)
    return adversary.begin_round(AdversaryContext(round_index, snapshot, adversary.beta, snapshot.n))


def _deliver(adversary, plan, count=4):
    pullers = np.arange(count)
    targets = np.repeat(plan.corrupted[:1], count)
    return adversary.corrupt(plan, pullers, targets, 0, np.zeros(count))


def test_none_strategy_corrupts_nothing():
    adversary = Adversary(StrategyDescriptor(), beta=0.1, n=50)
    assert _plan(adversary, np.arange(50)).size == 0


def test_zero_beta_corrupts_nothing():
    adversary = Adversary(StrategyDescriptor(kind=StrategyKind.STATIC_EXTREME), beta=0.0, n=50)
    assert _plan(adversary, np.arange(50)).size == 0


def test_sticky_set_is_the_same_every_round():
    adversary = Adversary(StrategyDescriptor(kind=StrategyKind.STICKY_EXTREME), beta=0.1, n=50, seed=3)
    sets = [_plan(adversary, np.arange(50), r).corrupted.tolist() for r in range(4)]
    assert all(s == [0, 1, 2, 3, 4] for s in sets)


def test_fresh_sets_respect_the_budget_and_move():
    adversary = Adversary(StrategyDescriptor(kind=StrategyKind.STATIC_EXTREME), beta=0.1, n=200, seed=3)
    sets = [_plan(adversary, np.arange(200), r).corrupted for r in range(5)]
    assert all(s.shape[0] == 20 and np.unique(s).shape[0] == 20 for s in sets)
    assert any(not np.array_equal(sets[0], s) for s in sets[1:])
    again = Adversary(StrategyDescriptor(kind=StrategyKind.STATIC_EXTREME), beta=0.1, n=200, seed=3)
    assert np.array_equal(_plan(again, np.arange(200), 2).corrupted, sets[2])


def test_static_extreme_delivers_its_value():
    adversary = Adversary(StrategyDescriptor(kind=StrategyKind.STATIC_EXTREME), beta=0.1, n=50)
    assert (_deliver(adversary, _plan(adversary, np.arange(50))) == 1e9).all()


def test_mean_inflator_delivers_m():
    adversary = Adversary(StrategyDescriptor(kind=StrategyKind.MEAN_INFLATOR), beta=0.1, n=50, m_bound=1.0)
    assert (_deliver(adversary, _plan(adversary, np.linspace(0, 1, 50))) == 1.0).all()


def test_alternating_extreme_switches_sides():
    adversary = Adversary(StrategyDescriptor(kind=StrategyKind.ALTERNATING_EXTREME), beta=0.1, n=50)
    assert (_deliver(adversary, _plan(adversary, np.arange(50), 0)) == 1e9).all()
    assert (_deliver(adversary, _plan(adversary, np.arange(50), 1)) == -1e9).all()


def test_median_pusher_sits_just_beside_the_median():
    values = np.arange(1, 101, dtype=np.float64)
    up = Adversary(StrategyDescriptor(kind=StrategyKind.MEDIAN_PUSHER), beta=0.01, n=100)
    down = Adversary(StrategyDescriptor(kind=StrategyKind.MEDIAN_PUSHER, direction=PushDirection.DOWN),
                     beta=0.01, n=100)
    pushed_up = _deliver(up, _plan(up, values))
    pushed_down = _deliver(down, _plan(down, values))
    assert (pushed_up > 50).all() and (pushed_up < 51).all()
    assert (pushed_down < 50).all()


def test_median_pusher_with_offset():
    adversary = Adversary(StrategyDescriptor(kind=StrategyKind.MEDIAN_PUSHER, offset=2.5), beta=0.01, n=100)
    assert (_deliver(adversary, _plan(adversary, np.arange(1, 101))) == 52.5).all()


def test_random_noise_is_in_range_and_repeatable():
    descriptor = StrategyDescriptor(kind=StrategyKind.RANDOM_NOISE, noise_low=-2.0, noise_high=3.0)
    adversary = Adversary(descriptor, beta=0.1, n=50, seed=4)
    plan = _plan(adversary, np.arange(50))
    first = _deliver(adversary, plan, count=20)
    second = _deliver(adversary, plan, count=20)
    assert np.array_equal(first, second)
    assert ((first >= -2.0) & (first < 3.0)).all()
    assert np.unique(first).shape[0] > 1


def test_descriptor_validation():
    with pytest.raises(ValidationError):
        StrategyDescriptor(kind="random_noise", noise_low=2.0, noise_high=1.0)
    with pytest.raises(ValidationError):
        StrategyDescriptor(kind="static_extreme", value=float("inf"))
    with pytest.raises(ValidationError):
        StrategyDescriptor(kind="static_extreme", strength=3)
    assert StrategyDescriptor(kind="static_extreme", sticky=True).is_sticky
