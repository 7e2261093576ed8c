import numpy as np
import pytest
import torch

from src.domain.entities.attention import AttentionStack
from src.domain.errors import EmptyCategoryList, EmptyMask
from src.domain.services.attention_control_service import AttentionControlService as ACS

T = torch.float64


def _softmax_stack(gen, n_obj=2, n_part=3, h=4, w=4) -> AttentionStack:
    def rows(n):
        logits = torch.randn(n, h, w, h * w, generator=gen, dtype=T)
        return torch.softmax(logits, dim=-1).reshape(n, h, w, h, w)

    return AttentionStack(obj=rows(n_obj), part=rows(n_part))


def test_aggregate_single_token():
    gen = torch.Generator().manual_seed(0)
    stack = _softmax_stack(gen)
    mask = torch.zeros(4, 4, dtype=torch.bool)
    mask[1, 2] = True
    out = ACS.aggregate_mask_attention(stack, mask, 1, 2)
    assert torch.equal(out, stack.obj[1, 1, 2] + stack.part[2, 1, 2])


def test_aggregate_mean_of_rows_sums_to_two():
    gen = torch.Generator().manual_seed(1)
    stack = _softmax_stack(gen)
    mask = torch.rand(4, 4, generator=gen) < 0.5
    mask[0, 0] = True
    out = ACS.aggregate_mask_attention(stack, mask, 0, 0)
    assert out.sum().item() == pytest.approx(2.0)


def test_aggregate_empty_mask():
    gen = torch.Generator().manual_seed(2)
    with pytest.raises(EmptyMask):
        empty = torch.zeros(4, 4, dtype=torch.bool)
        ACS.aggregate_mask_attention(_softmax_stack(gen), empty, 0, 0)


def test_token_masks_majority_vote_and_small_part_fallback():
    label = torch.zeros(8, 8, dtype=torch.long)
    label[:4, :4] = 1  # fills token (0, 0)
    label[4:7, 4:8] = 2  # 12 of 16 pixels of token (1, 1)
    label[0, 7] = 3  # a single pixel keeps its best-covered token
    masks = ACS.token_masks(label, 3, 4)
    assert masks.shape == (3, 2, 2)
    assert masks[0].tolist() == [[True, False], [False, False]]
    assert masks[1].tolist() == [[False, False], [False, True]]
    assert masks[2].tolist() == [[False, True], [False, False]]


def test_normalize_min_max_without_blur():
    out = ACS.normalize_and_smooth(torch.tensor([[2.0, 4.0, 6.0]], dtype=T), kernel=1)
    assert torch.allclose(out, torch.tensor([[0.0, 0.5, 1.0]], dtype=T))


def test_normalize_constant_map_is_zero():
    out = ACS.normalize_and_smooth(torch.full((3, 3), 7.0, dtype=T))
    assert torch.equal(out, torch.zeros(3, 3, dtype=T))


def test_smoothing_impulse_center_weight_and_mass():
    raw = torch.zeros(3, 3, dtype=T)
    raw[1, 1] = 1.0
    out = ACS.normalize_and_smooth(raw, sigma=1.0, kernel=3)
    assert out[1, 1].item() == pytest.approx(ACS.center_weight(3, 1.0), abs=1e-12)
    assert out.sum().item() == pytest.approx(1.0, abs=1e-12)
    # explicit 3x3 convolution oracle
    g = np.exp(-np.array([1.0, 0.0, 1.0]) / 2.0)
    g /= g.sum()
    assert out[0, 0].item() == pytest.approx(g[0] * g[0], abs=1e-12)


def test_normalize_scale_invariant_and_in_unit_interval():
    gen = torch.Generator().manual_seed(3)
    raw = torch.rand(2, 5, 5, generator=gen, dtype=T)
    a = ACS.normalize_and_smooth(raw)
    b = ACS.normalize_and_smooth(3.7 * raw)
    assert torch.allclose(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_binarize_inclusive_threshold_and_monotone():
    norm = torch.tensor([0.1, 0.35, 0.3], dtype=T)
    assert ACS.binarize(norm, 0.3).tolist() == [0.0, 1.0, 1.0]
    assert ACS.binarize(norm, 0.0).tolist() == [1.0, 1.0, 1.0]
    grid = torch.rand(6, 6, generator=torch.Generator().manual_seed(4), dtype=T)
    assert ACS.binarize(grid, 0.4).sum() <= ACS.binarize(grid, 0.2).sum()


def test_separation_hard_examples():
    a = torch.zeros(4, 4)
    b = torch.zeros(4, 4)
    a[0, :2] = 1
    b[1, :2] = 1
    assert ACS.separation_loss_hard([a, b], 2) == 0.0
    assert ACS.separation_loss_hard([a, a], 2) == 0.5
    c = torch.zeros(4, 4)
    d = torch.zeros(4, 4)
    c[0, :4] = 1
    d[0, 2:4] = 1
    d[1, :2] = 1
    # overlap 2, union 6
    assert ACS.separation_loss_hard([c, d], 2) == pytest.approx(1 / 6)
    assert ACS.separation_loss_hard([torch.zeros(2, 2)], 3) == 0.0


def test_separation_hard_matches_set_counting_and_bound():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(1, 5))
        grids = rng.random((n, 6, 6)) < 0.4
        coverage = grids.sum(axis=0)
        union = int((coverage >= 1).sum())
        expected = 0.0 if union == 0 else int((coverage > 1).sum()) / union / 7
        got = ACS.separation_loss_hard(torch.from_numpy(grids.astype(np.float64)), 7)
        assert got == pytest.approx(expected, abs=0)
        assert 0.0 <= got <= 1 / 7


def test_separation_soft_converges_to_hard():
    rng = np.random.default_rng(6)
    tau, gamma = 1e-3, 0.3
    for _ in range(20):
        values = rng.random((3, 5, 5))
        # keep every value at least 25 tau away from gamma
        values = np.where(np.abs(values - gamma) < 25 * tau, gamma + 0.1, values)
        norms = torch.from_numpy(values)
        soft = ACS.separation_loss_soft(norms, gamma, tau, 1e-8, 3).item()
        hard = ACS.separation_loss_hard(ACS.binarize(norms, gamma), 3)
        assert abs(soft - hard) < 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_separation_soft_matches_hard_beyond_ten_tau(seed):
    rng = np.random.default_rng(100 + seed)
    tau, gamma = 1e-3, 0.3
    # values drawn from [0, gamma - 25 tau] and [gamma + 25 tau, 1]
    low = rng.uniform(0.0, gamma - 25 * tau, (4, 6, 6))
    high = rng.uniform(gamma + 25 * tau, 1.0, (4, 6, 6))
    values = np.where(rng.random((4, 6, 6)) < 0.5, low, high)
    assert (np.abs(values - gamma) >= 10 * tau).all()
    norms = torch.from_numpy(values)
    soft = ACS.separation_loss_soft(norms, gamma, tau, 1e-8, 4).item()
    hard = ACS.separation_loss_hard(ACS.binarize(norms, gamma), 4)
    assert abs(soft - hard) < 1e-6


def test_separation_soft_vanishes_on_zero_maps():
    loss = ACS.separation_loss_soft(torch.zeros(2, 4, 4, dtype=T), 0.3, 0.05)
    assert loss.item() == pytest.approx(0.0, abs=1e-6)


def test_losses_invariant_under_category_permutation():
    gen = torch.Generator().manual_seed(7)
    norms = torch.rand(3, 4, 4, generator=gen, dtype=T)
    masks = torch.rand(3, 4, 4, generator=gen) < 0.5
    masks[:, 0, 0] = True
    perm = [2, 0, 1]
    assert ACS.separation_loss_soft(norms, 0.3, 0.05).item() == pytest.approx(
        ACS.separation_loss_soft(norms[perm], 0.3, 0.05).item()
    )
    pairs = list(zip(norms, masks))
    shuffled = [pairs[i] for i in perm]
    assert ACS.enhancement_loss(pairs).item() == ACS.enhancement_loss(shuffled).item()


def test_enhancement_examples():
    ones = torch.ones(2, 2, dtype=torch.bool)
    maps = [torch.full((2, 2), v, dtype=T) for v in (1.0, 0.7, 0.9)]
    assert ACS.enhancement_loss([(m, ones) for m in maps]).item() == pytest.approx(0.3)
    assert ACS.enhancement_loss([(maps[0], ones)]).item() == 0.0
    assert ACS.enhancement_loss([(torch.zeros(2, 2, dtype=T), ones)]).item() == 1.0
    with pytest.raises(EmptyCategoryList):
        ACS.enhancement_loss([])


def test_enhancement_only_looks_inside_mask():
    value = torch.tensor([[1.0, 0.2], [0.1, 0.0]], dtype=T)
    mask = torch.tensor([[False, True], [True, False]])
    assert ACS.enhancement_loss([(value, mask)]).item() == pytest.approx(0.8)


def test_soft_separation_and_enhancement_gradcheck():
    gen = torch.Generator().manual_seed(8)
    for _ in range(5):
        norms = torch.rand(3, 4, 4, generator=gen, dtype=T, requires_grad=True)
        masks = torch.rand(3, 4, 4, generator=gen) < 0.5
        masks[:, 1, 1] = True
        assert torch.autograd.gradcheck(
            lambda x: ACS.separation_loss_soft(x, 0.3, 0.2), (norms,), rtol=1e-4
        )
        assert torch.autograd.gradcheck(
            lambda x: ACS.enhancement_loss(list(zip(x, masks))), (norms,), rtol=1e-4
        )


def test_attention_losses_skip_absent_categories(taxonomy):
    gen = torch.Generator().manual_seed(9)
    stack = _softmax_stack(gen, n_obj=taxonomy.num_objects, n_part=taxonomy.num_parts)
    masks = torch.zeros(taxonomy.num_pairs, 4, 4, dtype=torch.bool)
    masks[0, :2] = True
    masks[2, 2:] = True
    out = ACS.attention_losses(
        stack, masks, taxonomy, gamma=0.3, sigma=1.0, kernel=3, tau=0.05, eps=1e-8
    )
    assert out.maps.pairs == (0, 2)
    assert 0.0 <= out.enh.item() <= 1.0
    assert 0.0 <= out.sep_hard <= 1 / taxonomy.num_pairs
    present = ACS.attention_losses(
        stack,
        masks,
        taxonomy,
        gamma=0.3,
        sigma=1.0,
        kernel=3,
        tau=0.05,
        eps=1e-8,
        sep_denominator="present",
    )
    assert present.sep_hard == pytest.approx(out.sep_hard * taxonomy.num_pairs / 2)


def test_attention_losses_without_present_categories(taxonomy):
    gen = torch.Generator().manual_seed(10)
    stack = _softmax_stack(gen, n_obj=taxonomy.num_objects, n_part=taxonomy.num_parts)
    masks = torch.zeros(taxonomy.num_pairs, 4, 4, dtype=torch.bool)
    out = ACS.attention_losses(
        stack, masks, taxonomy, gamma=0.3, sigma=1.0, kernel=3, tau=0.05, eps=1e-8
    )
    assert out.maps is None
    assert out.enh.item() == 0.0 and out.sep_hard == 0.0
