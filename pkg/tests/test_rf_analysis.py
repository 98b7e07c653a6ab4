import math

import pytest

from rfscope import (
    Activation,
    Add,
    Attention,
    BatchNorm,
    Conv2d,
    Dense,
    FrontierLimitError,
    GlobalAvgPool,
    Input,
    InputSpec,
    PathLimitError,
    Pool,
    RFState,
    chain_graph,
    effective_kernel,
    layer_rf_transfer,
    make_graph,
    path_enumeration_oracle,
    propagate_dag,
    propagate_sequential,
)
from rfscope.rf_analysis import GLOBAL_STATE, prune_frontier

IN32 = InputSpec(32, 32, 3)


def fold_ks(pairs):
    """Independent reference fold over (kernel, stride) pairs: r += (k-1)*j, j *= s."""
    r, j = 1, 1
    states = []
    for k, s in pairs:
        r = r + (k - 1) * j
        j = j * s
        states.append((r, j))
    return states


# (kernel, stride) sequences of the plain-conv prefixes used below.
VGG16_PREFIX = [(3, 1), (3, 1), (2, 2), (3, 1), (3, 1), (2, 2), (3, 1), (3, 1), (3, 1), (2, 2), (3, 1)]
VGG11_PREFIX = [(3, 1), (2, 2), (3, 1), (2, 2), (3, 1), (3, 1), (2, 2), (3, 1), (3, 1)]


def conv(k, s=1, d=1, f=8):
    return Conv2d(kernel=k, stride=s, dilation=d, filters=f, bias=False)


def maxpool(k, s):
    return Pool(mode="max", kernel=k, stride=s)


class TestEffectiveKernel:
    def test_no_dilation(self):
        assert effective_kernel(3, 1) == 3

    def test_dilation_3_inflates_3x3_to_7x7(self):
        assert effective_kernel(3, 3) == 7

    def test_pointwise_is_dilation_invariant(self):
        assert effective_kernel(1, 5) == 1

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            effective_kernel(0, 1)
        with pytest.raises(ValueError):
            effective_kernel(3, 0)


class TestLayerTransfer:
    def test_first_3x3_conv(self):
        assert layer_rf_transfer(RFState(1, 1), conv(3)) == RFState(3, 1)

    def test_pool_grows_and_doubles_jump(self):
        assert layer_rf_transfer(RFState(5, 1), maxpool(2, 2)) == RFState(6, 2)

    def test_attention_is_neutral(self):
        assert layer_rf_transfer(RFState(11, 4), Attention("se")) == RFState(11, 4)

    @pytest.mark.parametrize("kind", [BatchNorm(), Activation("relu"), Add(), Input()])
    def test_identity_kinds(self, kind):
        assert layer_rf_transfer(RFState(9, 2), kind) == RFState(9, 2)

    def test_pointwise_conv_grows_nothing_but_strides(self):
        assert layer_rf_transfer(RFState(9, 2), conv(1, s=2)) == RFState(9, 4)

    def test_dilated_conv_uses_effective_kernel(self):
        assert layer_rf_transfer(RFState(1, 1), conv(3, d=3)) == RFState(7, 1)

    def test_global_marks_and_absorbs(self):
        g = layer_rf_transfer(RFState(9, 2), GlobalAvgPool())
        assert g.global_rf and g.r_value == math.inf
        assert layer_rf_transfer(g, conv(3)) == GLOBAL_STATE
        assert layer_rf_transfer(RFState(9, 2), Dense(units=10)).global_rf


class TestPropagateSequential:
    def test_matches_reference_fold_on_vgg16_prefix(self):
        layers = [conv(k) if s == 1 else maxpool(k, s) for k, s in VGG16_PREFIX]
        got = propagate_sequential(layers, IN32)
        assert [(s.r, s.j) for s in got] == fold_ks(VGG16_PREFIX)

    def test_vgg16_prefix_landmarks(self):
        # After the 7th conv r = 40; the pool after it hands conv8 an input of 44.
        states = fold_ks(VGG16_PREFIX)
        assert states[-3] == (40, 4)
        assert states[-2] == (44, 8)

    def test_vgg11_prefix_landmarks(self):
        states = fold_ks(VGG11_PREFIX)
        assert states[-3][0] == 30  # entering the 5th conv
        assert states[-2][0] == 46  # entering the 6th conv

    def test_single_pointwise_conv(self):
        assert propagate_sequential([conv(1)], IN32) == [RFState(1, 1)]

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValueError):
            propagate_sequential([], IN32)

    def test_agrees_with_dag_on_chain(self):
        layers = [("c1", conv(3)), ("p1", maxpool(2, 2)), ("c2", conv(5, s=2)), ("bn", BatchNorm())]
        g = chain_graph("chain", IN32, layers)
        seq = propagate_sequential([k for _, k in layers], IN32)
        ann = propagate_dag(g)
        for (nid, _), state in zip(layers, seq):
            assert ann[nid].out_frontier == (state,)
            assert ann[nid].r_out_min == ann[nid].r_out_max == state.r


def two_path_diamond():
    layers = [
        ("input", Input()),
        ("k3", conv(3, f=4)),
        ("k7", conv(7, f=4)),
        ("add", Add()),
    ]
    edges = [("input", "k3"), ("input", "k7"), ("k3", "add"), ("k7", "add")]
    return make_graph("diamond", IN32, layers, edges)


def residual_block_graph():
    """Stem reaching state (11, 4), then an identity skip around two 3x3 convs."""
    layers = [
        ("input", Input()),
        ("stem", conv(7, s=2)),
        ("pool", Pool(mode="max", kernel=3, stride=2, padding=1)),
        ("c1", conv(3)),
        ("c2", conv(3)),
        ("add", Add()),
    ]
    edges = [("input", "stem"), ("stem", "pool"), ("pool", "c1"), ("c1", "c2"), ("c2", "add"), ("pool", "add")]
    return make_graph("resblock", IN32, layers, edges)


class TestPropagateDag:
    def test_chain_frontiers_are_singletons(self):
        g = chain_graph("chain", IN32, [("c1", conv(3)), ("c2", conv(3, s=2)), ("p", maxpool(2, 2))])
        for ann in propagate_dag(g).values():
            assert len(ann.in_frontier) == 1 and len(ann.out_frontier) == 1
            assert ann.r_in_min == ann.r_in_max

    def test_diamond_merge_extremes(self):
        ann = propagate_dag(two_path_diamond())
        assert ann["add"].r_in_min == 3
        assert ann["add"].r_in_max == 7
        assert set(ann["add"].in_frontier) == {RFState(3, 1), RFState(7, 1)}

    def test_residual_block_min_sticks_max_grows(self):
        ann = propagate_dag(residual_block_graph())
        assert ann["pool"].out_frontier == (RFState(11, 4),)
        assert ann["c1"].r_out_max == 19
        assert ann["add"].r_in_min == 11
        assert ann["add"].r_in_max == 27

    def test_global_propagates_downstream(self):
        g = chain_graph("gap-mid", IN32, [("c1", conv(3)), ("gap", GlobalAvgPool()), ("c2", conv(3))])
        ann = propagate_dag(g)
        assert ann["c2"].r_in_min == math.inf
        assert ann["c2"].r_out_max == math.inf

    def test_frontier_cap_enforced(self):
        with pytest.raises(FrontierLimitError) as err:
            propagate_dag(two_path_diamond(), frontier_cap=1)
        assert "add" in str(err.value)


class TestPruneFrontier:
    def test_keeps_min_and_max_representatives(self):
        states = {RFState(3, 2), RFState(5, 1), RFState(4, 3)}
        kept = set(prune_frontier(states))
        # (3,2) and (5,1) sit on the min frontier; (5,1) and (4,3) on the max frontier.
        assert kept == {RFState(3, 2), RFState(5, 1), RFState(4, 3)}

    def test_drops_doubly_dominated(self):
        states = {RFState(3, 1), RFState(4, 2), RFState(5, 3)}
        kept = set(prune_frontier(states))
        assert kept == {RFState(3, 1), RFState(5, 3)}

    def test_global_state_owns_the_max_side(self):
        kept = set(prune_frontier({RFState(3, 1), GLOBAL_STATE, RFState(9, 4)}))
        assert GLOBAL_STATE in kept
        assert RFState(3, 1) in kept
        assert RFState(9, 4) not in kept

    def test_all_global_collapses_to_one(self):
        assert prune_frontier({GLOBAL_STATE}) == (GLOBAL_STATE,)

    def test_empty(self):
        assert prune_frontier(set()) == ()


class TestOracle:
    def test_chain_matches_sequential(self):
        layers = [("c1", conv(3)), ("p1", maxpool(2, 2)), ("c2", conv(5))]
        g = chain_graph("chain", IN32, layers)
        seq = propagate_sequential([k for _, k in layers], IN32)
        for (nid, _), state in zip(layers, seq):
            assert path_enumeration_oracle(g, nid, at="out") == (state.r, state.r)

    def test_diamond_extremes(self):
        assert path_enumeration_oracle(two_path_diamond(), "add", at="in") == (3, 7)
        assert path_enumeration_oracle(two_path_diamond(), "add", at="out") == (3, 7)

    def test_input_node(self):
        g = two_path_diamond()
        assert path_enumeration_oracle(g, "input", at="in") == (1, 1)

    def test_path_limit_guard(self):
        layers = [("input", Input())]
        edges = []
        prev = "input"
        for i in range(4):  # four stacked diamonds: 16 paths
            a, b, m = f"a{i}", f"b{i}", f"m{i}"
            layers += [(a, conv(3, f=3)), (b, conv(5, f=3)), (m, Add())]
            edges += [(prev, a), (prev, b), (a, m), (b, m)]
            prev = m
        g = make_graph("stack", IN32, layers, edges)
        with pytest.raises(PathLimitError):
            path_enumeration_oracle(g, "m3", path_limit=8)
        assert path_enumeration_oracle(g, "m3", path_limit=16)
