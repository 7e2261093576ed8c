import numpy as np
import pytest

from src.domain.errors import EmptyMask, ShapeMismatch, UnknownObject
from src.domain.services.protocol_service import ProtocolService


def _logits(taxonomy, h=4, w=4, seed=0):
    return np.random.default_rng(seed).normal(size=(taxonomy.num_channels, h, w))


def test_pred_all_uncategory_wins(taxonomy):
    z = np.zeros((taxonomy.num_channels, 3, 3))
    z[taxonomy.pair_bg_channel] = 5.0
    assert (ProtocolService.pred_all_decode(z, taxonomy) == 0).all()


def test_pred_all_constant_class(taxonomy):
    z = np.zeros((taxonomy.num_channels, 3, 3))
    z[2] = 1.0
    assert (ProtocolService.pred_all_decode(z, taxonomy) == 3).all()


def test_pred_all_ignores_object_and_part_channels(taxonomy):
    z = np.zeros((taxonomy.num_channels, 2, 2))
    z[taxonomy.object_channel_offset :] = 100.0
    z[1] = 1.0
    assert (ProtocolService.pred_all_decode(z, taxonomy) == 2).all()


def test_pred_all_matches_brute_force_and_breaks_ties_low(taxonomy):
    z = _logits(taxonomy)
    z[:, 0, 0] = 0.0
    pred = ProtocolService.pred_all_decode(z, taxonomy)
    for i in range(4):
        for j in range(4):
            best = max(range(taxonomy.num_pairs + 1), key=lambda c: (z[c, i, j], -c))
            assert pred[i, j] == (0 if best == taxonomy.pair_bg_channel else best + 1)
    assert pred[0, 0] == 1


def test_oracle_obj_excludes_other_objects(taxonomy):
    z = np.zeros((taxonomy.num_channels, 2, 2))
    z[2] = 10.0  # cat's head dominates everywhere
    z[1] = 1.0  # dog's leg is the best dog channel
    mask = np.array([[True, True], [False, False]])
    out = ProtocolService.oracle_obj_restrict(z, mask, 0, taxonomy)
    assert out.tolist() == [[2, 2], [0, 0]]


def test_oracle_obj_matches_exhaustive_argmax(taxonomy):
    z = _logits(taxonomy, 2, 2, seed=3)
    mask = np.ones((2, 2), dtype=bool)
    out = ProtocolService.oracle_obj_restrict(z, mask, 1, taxonomy)
    allowed = taxonomy.parts_of_object[1]
    for i in range(2):
        for j in range(2):
            assert out[i, j] == max(allowed, key=lambda c: (z[c, i, j], -c)) + 1


def test_oracle_obj_errors(taxonomy):
    z = _logits(taxonomy)
    with pytest.raises(EmptyMask):
        ProtocolService.oracle_obj_restrict(z, np.zeros((4, 4), dtype=bool), 0, taxonomy)
    with pytest.raises(UnknownObject):
        ProtocolService.oracle_obj_restrict(z, np.ones((4, 4), dtype=bool), 5, taxonomy)
    with pytest.raises(ShapeMismatch):
        ProtocolService.oracle_obj_restrict(z, np.ones((3, 3), dtype=bool), 0, taxonomy)
    with pytest.raises(UnknownObject):
        ProtocolService.decode(z, "oracle_obj", taxonomy)


def test_oracle_obj_decode_per_object(taxonomy):
    z = _logits(taxonomy, seed=4)
    object_label = np.zeros((4, 4), dtype=np.int64)
    object_label[:, :2] = 1
    object_label[:, 3] = 2
    out = ProtocolService.decode(z, "oracle_obj", taxonomy, object_label)
    assert set(np.unique(out[:, :2])) <= {1, 2}
    assert set(np.unique(out[:, 3])) <= {3, 4}
    assert (out[:, 2] == 0).all()


def test_oracle_obj_never_worse_on_object_pixels(taxonomy):
    rng = np.random.default_rng(5)
    for _ in range(20):
        z = rng.normal(size=(taxonomy.num_channels, 4, 4))
        gt = rng.integers(1, taxonomy.num_pairs + 1, size=(4, 4))
        object_label = taxonomy.pair_to_object()[gt - 1] + 1
        oracle = ProtocolService.decode(z, "oracle_obj", taxonomy, object_label)
        pred_all = ProtocolService.decode(z, "pred_all", taxonomy)
        assert (oracle == gt).sum() >= (pred_all == gt).sum()
