import math

import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from tactictraj.enhance import FeatureEnhancer, fuse, global_attend, local_attend, split_teams, team_rows
from tactictraj.errors import DataError, DimensionError
from tactictraj.numeric import SeededRng, as_tensor, gaussian, init_parameters, scaled_dot_attention

TEAM_OF = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1, -1]


def enhancer(d_g=8, d_k=8, seed=0):
    return init_parameters(FeatureEnhancer(d_g, d_k), SeededRng(seed))


def test_split_teams_shares_ball_row():
    rows = team_rows(TEAM_OF, 2, 6)
    G = gaussian(SeededRng(1), (11, 4))
    blocks = split_teams(G, rows)
    assert blocks.shape == (2, 6, 4)
    assert torch.equal(blocks[0, -1], G[10]) and torch.equal(blocks[1, -1], G[10])
    assert torch.equal(blocks[1, :5], G[5:10])


def test_team_rows_errors():
    with pytest.raises(DataError):
        team_rows([0, 0, 0, 0, 1, 1, 1, 1, 1, -1], 2, 6)
    with pytest.raises(DataError):
        team_rows([0] * 5 + [1] * 5, 2, 6)


def test_split_teams_per_scene_rows():
    G = gaussian(SeededRng(2), (2, 11, 3))
    rows = torch.stack([team_rows(TEAM_OF, 2, 6), team_rows(TEAM_OF[5:10] + TEAM_OF[:5] + [-1], 2, 6)])
    blocks = split_teams(G, rows)
    assert torch.equal(blocks[1, 0, :5], G[1, 5:10])
    with pytest.raises(DimensionError):
        split_teams(G, rows[:1])


def test_global_attend_equal_rows():
    enh = enhancer()
    r = gaussian(SeededRng(3), (1, 8))
    scene = r.expand(11, 8)
    G_j = gaussian(SeededRng(4), (6, 8))
    out = global_attend(enh, G_j, scene)
    assert out.shape == (6, 8)
    assert torch.allclose(out, enh.global_v(r).expand(6, 8), atol=1e-14, rtol=0)


def test_global_attend_concentrates_on_matching_token():
    d_k = 4
    enh = FeatureEnhancer(d_k, d_k)
    with torch.no_grad():
        for lin in (enh.global_q, enh.global_k, enh.global_v):
            lin.weight.copy_(torch.eye(d_k))
    # three orthogonal tokens with scaled logit gap 3
    c = math.sqrt(3 * math.sqrt(d_k))
    scene = c * torch.eye(d_k, dtype=torch.float64)[:3]
    _, w = scaled_dot_attention(enh.global_q(scene), enh.global_k(scene), enh.global_v(scene), return_weights=True)
    expected = 1.0 / (1.0 + 2.0 * math.exp(-3.0))
    assert torch.allclose(torch.diagonal(w), torch.full((3,), expected, dtype=torch.float64), atol=1e-12)
    assert bool((torch.diagonal(w) > 0.9).all())


def test_global_attend_width_mismatch():
    with pytest.raises(DimensionError):
        global_attend(enhancer(), torch.zeros(6, 8, dtype=torch.float64), torch.zeros(11, 4, dtype=torch.float64))


def test_local_attend_single_key():
    enh = enhancer()
    g_prime = gaussian(SeededRng(5), (6, 8))
    ball = gaussian(SeededRng(6), (1, 8))
    k = enh.local_k(ball)
    _, w = scaled_dot_attention(enh.local_q(g_prime), k, enh.local_v(ball), return_weights=True)
    assert torch.equal(w, torch.ones(6, 1, dtype=torch.float64))
    assert torch.count_nonzero(local_attend(enh, g_prime, torch.zeros(1, 8, dtype=torch.float64))) == 0
    other = gaussian(SeededRng(7), (6, 8))
    a, b = local_attend(enh, g_prime, ball), local_attend(enh, other, ball)
    assert torch.allclose(a, b, atol=0, rtol=0)
    assert torch.allclose(a, enh.local_v(ball).expand(6, 8), atol=0, rtol=0)


def test_fuse_residual_and_additivity():
    enh = enhancer()
    a = gaussian(SeededRng(8), (6, 8))
    v = gaussian(SeededRng(9), (6, 8))
    zero = torch.zeros_like(v)
    assert torch.equal(fuse(a, zero, enh.fuse_proj), a)
    assert torch.allclose(fuse(a, v, enh.fuse_proj) - fuse(a, zero, enh.fuse_proj), enh.fuse_proj(v), atol=1e-14)
    with pytest.raises(DimensionError):
        fuse(a, v[:5], enh.fuse_proj)


def test_enhancer_output_shape_and_finite():
    enh = enhancer(8, 4)
    G = gaussian(SeededRng(10), (11, 8))
    out = enh(split_teams(G, team_rows(TEAM_OF, 2, 6)), G)
    assert out.shape == (2, 6, 8) and bool(torch.isfinite(out).all())


@given(st.permutations(range(5)), st.integers(0, 1000))
def test_enhancer_permutation_equivariance(perm, seed):
    enh = enhancer(8, 4, seed)
    G = gaussian(SeededRng(seed, ("G",)), (11, 8))
    blocks = split_teams(G, team_rows(TEAM_OF, 2, 6))
    out = enh(blocks, G)
    order = as_tensor(list(perm) + [5]).long()
    permuted = enh(blocks[:, order], G)
    assert torch.allclose(permuted, out[:, order], atol=1e-12, rtol=0)
