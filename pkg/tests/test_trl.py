import pytest
import torch
from torch import nn

from vidreid.errors import NumericError, ShapeError
from vidreid.trl import (
    EMU,
    TRL,
    emu_step,
    init_memory,
    integrate_bidirectional,
    run_direction,
    test_time_embedding,
)

from conftest import fd_relative_error


def full(value, shape=(1, 1, 1, 1)):
    return torch.full(shape, float(value))


def test_init_memory_examples():
    low = torch.tensor([1.0, 3.0]).view(1, 2, 1, 1, 1)
    assert init_memory(low).item() == 2.0
    single = torch.randn(2, 1, 3, 2, 2)
    assert torch.equal(init_memory(single), single[:, 0])


def test_init_memory_matches_loop_oracle():
    torch.manual_seed(0)
    low = torch.randn(2, 3, 2, 2, 2, dtype=torch.float64)
    n, t, c, h, w = low.shape
    oracle = torch.zeros(n, c, h, w, dtype=torch.float64)
    for a in range(n):
        for ch in range(c):
            for y in range(h):
                for x in range(w):
                    oracle[a, ch, y, x] = sum(low[a, i, ch, y, x].item() for i in range(t)) / t
    assert torch.allclose(init_memory(low), oracle, atol=1e-12)


def test_difference_with_identity_maps():
    emu = EMU(1, identity_maps=True)
    d = emu.difference(full(1), full(3))
    assert d.item() == 4.0


def test_zero_attention_scales_by_one_and_a_half():
    torch.manual_seed(1)
    emu = EMU(4)
    with torch.no_grad():
        emu.attn.weight.zero_()
        emu.attn.bias.zero_()
    high = torch.randn(2, 4, 3, 3)
    enhanced, _ = emu_step(high, torch.randn(2, 4, 3, 3), torch.randn(2, 4, 3, 3), emu)
    assert torch.equal(enhanced, 1.5 * high)


def test_identity_res_accumulates():
    emu = EMU(1, identity_res=True)
    _, mem = emu(full(0.5), full(2), full(1))
    assert mem.item() == 3.0


def test_multiplier_strictly_between_one_and_two():
    torch.manual_seed(2)
    emu = EMU(8).double()
    with torch.no_grad():
        emu.attn.weight.mul_(5)
    high = torch.rand(3, 8, 2, 2, dtype=torch.float64) + 0.1
    _, mem0 = emu(high, high, torch.randn(3, 8, 2, 2, dtype=torch.float64))
    gate = emu.channel_gate(high, mem0)
    assert torch.all((1 + gate > 1) & (1 + gate < 2))


def test_non_finite_memory_rejected():
    emu = EMU(1)
    with pytest.raises(NumericError):
        emu(full(1), full(1), full(float("nan")))


def test_shape_mismatch_rejected():
    emu = EMU(2)
    with pytest.raises(ShapeError):
        emu(torch.zeros(1, 2, 2, 2), torch.zeros(1, 2, 2, 2), torch.zeros(1, 2, 3, 2))


def test_single_frame_directions_agree():
    torch.manual_seed(3)
    emu = EMU(4).eval()
    high, low = torch.randn(2, 1, 4, 2, 2), torch.randn(2, 1, 4, 2, 2)
    f = run_direction(high, low, "forward", emu)
    b = run_direction(high, low, "backward", emu)
    assert torch.equal(f.steps, b.steps) and torch.equal(f.memory, b.memory)


def test_zero_low_keeps_zero_memory():
    emu = EMU(3, identity_res=True)
    high = torch.randn(1, 4, 3, 2, 2)
    out = run_direction(high, torch.zeros_like(high), "forward", emu)
    assert torch.count_nonzero(out.memory) == 0


def test_tied_reversal_symmetry():
    torch.manual_seed(4)
    trl = TRL(4, tied_weights=True).double().eval()
    assert trl.fwd is trl.bwd
    high = torch.randn(2, 5, 4, 2, 2, dtype=torch.float64)
    low = torch.randn(2, 5, 4, 2, 2, dtype=torch.float64)
    rev = torch.arange(4, -1, -1)
    fwd_rev = run_direction(high[:, rev], low[:, rev], "forward", trl.fwd)
    bwd = run_direction(high, low, "backward", trl.bwd)
    assert (fwd_rev.steps - bwd.steps[:, rev]).abs().max() < 1e-10
    assert (fwd_rev.memory - bwd.memory).abs().max() < 1e-10


def test_steps_stored_in_frame_order():
    emu = EMU(1, identity_maps=True, identity_res=True)
    with torch.no_grad():
        emu.attn.weight.zero_()
        emu.attn.bias.zero_()
    high = torch.arange(1.0, 4.0).view(1, 3, 1, 1, 1)
    out = run_direction(high, torch.zeros_like(high), "backward", emu)
    assert out.steps.flatten().tolist() == [1.5, 3.0, 4.5]


def test_memory_monotone_with_identity_res_and_nonnegative_low():
    emu = EMU(3, identity_res=True)
    low = torch.rand(2, 6, 3, 2, 2, dtype=torch.float64)
    out = run_direction(torch.randn_like(low), low, "forward", emu.double(), keep_trajectory=True)
    mems = [init_memory(low)] + out.trajectory
    for prev, nxt in zip(mems, mems[1:]):
        assert torch.all(nxt >= prev)


def test_integrate_projections():
    torch.manual_seed(5)
    c = 3
    fwd = run_direction(torch.randn(2, 4, c, 2, 2), torch.randn(2, 4, c, 2, 2), "forward", EMU(c))
    bwd = run_direction(torch.randn(2, 4, c, 2, 2), torch.randn(2, 4, c, 2, 2), "backward", EMU(c))
    w_h, w_l = nn.Linear(2 * c, c, bias=False), nn.Linear(2 * c, c, bias=False)
    with torch.no_grad():
        w_h.weight.copy_(torch.cat([torch.eye(c), torch.zeros(c, c)], 1))
        w_l.weight.copy_(torch.cat([torch.zeros(c, c), torch.eye(c)], 1))
    fused, low = integrate_bidirectional(fwd, bwd, w_h, w_l)
    assert torch.equal(fused, fwd.steps)
    assert torch.allclose(low, bwd.memory.mean(dim=(2, 3)))


def test_integrate_matches_dense_oracle():
    torch.manual_seed(6)
    c, t = 3, 4
    fwd = run_direction(torch.randn(2, t, c, 2, 2), torch.randn(2, t, c, 2, 2), "forward", EMU(c))
    bwd = run_direction(torch.randn(2, t, c, 2, 2), torch.randn(2, t, c, 2, 2), "backward", EMU(c))
    w_h, w_l = nn.Linear(2 * c, 5, bias=False), nn.Linear(2 * c, 5, bias=False)
    fused, low = integrate_bidirectional(fwd, bwd, w_h, w_l)
    W = w_h.weight.detach()
    for n in range(2):
        for i in range(t):
            v = torch.cat([fwd.steps[n, i], bwd.steps[n, i]]).detach()
            assert torch.allclose(fused[n, i], W @ v, atol=1e-6)
        m = torch.cat([fwd.memory[n].mean(dim=(1, 2)), bwd.memory[n].mean(dim=(1, 2))]).detach()
        assert torch.allclose(low[n], w_l.weight.detach() @ m, atol=1e-6)


def test_integrate_length_mismatch_rejected():
    emu = EMU(2).eval()
    a = run_direction(torch.randn(1, 3, 2, 1, 1), torch.randn(1, 3, 2, 1, 1), "forward", emu)
    b = run_direction(torch.randn(1, 2, 2, 1, 1), torch.randn(1, 2, 2, 1, 1), "forward", emu)
    with pytest.raises(ShapeError):
        integrate_bidirectional(a, b, nn.Linear(4, 2), nn.Linear(4, 2))


def test_test_time_embedding_examples():
    emb = test_time_embedding(torch.tensor([[[1.0, 0.0], [3.0, 0.0]]]), torch.tensor([[5.0, 7.0]]))
    assert emb.joint.tolist() == [[2.0, 0.0, 5.0, 7.0]]
    one = torch.randn(2, 1, 3)
    assert torch.equal(test_time_embedding(one, torch.zeros(2, 3)).high, one[:, 0])
    assert torch.equal(test_time_embedding(torch.tensor([[[1.0], [3.0]]]), torch.zeros(1, 1),
                                           pool="max").high, torch.tensor([[3.0]]))


def test_three_step_bidirectional_gradient():
    torch.manual_seed(7)
    trl = TRL(4).double().eval()
    high = torch.randn(1, 3, 4, 2, 2, dtype=torch.float64, requires_grad=True)
    low = torch.randn(1, 3, 4, 2, 2, dtype=torch.float64, requires_grad=True)
    wf, wl = torch.randn(1, 3, 4, dtype=torch.float64), torch.randn(1, 4, dtype=torch.float64)

    def loss():
        fused, low_final = trl(high, low)
        return (fused * wf).sum() + (low_final * wl).sum()

    params = [p for p in trl.parameters() if p.requires_grad]
    # tied parameter lists may repeat; dedupe by identity
    params = list({id(p): p for p in params}.values())
    assert fd_relative_error(loss, params + [high, low]) < 1e-4


def test_frame_order_changes_embedding():
    torch.manual_seed(8)
    trl = TRL(4).double().eval()
    high = torch.randn(1, 4, 4, 2, 2, dtype=torch.float64)
    low = torch.randn(1, 4, 4, 2, 2, dtype=torch.float64).abs()
    perm = torch.tensor([2, 0, 3, 1])
    fused, lo = trl(high, low)
    fused_p, lo_p = trl(high[:, perm], low[:, perm])
    joint = test_time_embedding(fused, lo).joint
    joint_p = test_time_embedding(fused_p, lo_p).joint
    assert not torch.allclose(joint, joint_p)


def test_single_direction_and_ablation_flags():
    trl = TRL(4, direction="forward")
    assert trl.bwd is None and trl.w_high.in_features == 4
    emu = EMU(4, enhancement=False, memory=False)
    high, low, mem = torch.randn(1, 4, 2, 2), torch.randn(1, 4, 2, 2), torch.randn(1, 4, 2, 2)
    enhanced, new_mem = emu(high, low, mem)
    assert torch.equal(enhanced, high) and torch.equal(new_mem, mem)
