import pytest
import torch

from vidreid.data import SyntheticSpec, generate_synthetic_dataset


def fd_relative_error(fn, params, step=1e-3):
    """Relative error between autograd and central-difference gradients.

    ``fn`` returns a scalar; ``params`` are double tensors with
    ``requires_grad``. Error is ``||g_auto - g_fd|| / ||g_fd||`` over all
    parameters jointly.
    """
    loss = fn()
    grads = torch.autograd.grad(loss, params)
    auto, numeric = [], []
    with torch.no_grad():
        for p, g in zip(params, grads):
            flat = p.view(-1)
            fd = torch.empty_like(flat)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                plus = fn().item()
                flat[i] = orig - step
                minus = fn().item()
                flat[i] = orig
                fd[i] = (plus - minus) / (2 * step)
            auto.append(g.reshape(-1))
            numeric.append(fd)
    auto, numeric = torch.cat(auto), torch.cat(numeric)
    return ((auto - numeric).norm() / numeric.norm().clamp_min(1e-12)).item()


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    spec = SyntheticSpec(identities=4, cameras=2, tracklets_per_pair=2,
                         frames_per_tracklet=10, height=32, width=16, seed=3)
    generate_synthetic_dataset(spec, root, force=True)
    return root


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
