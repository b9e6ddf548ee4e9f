import pytest
import torch

from vidreid.backbone import DeskBackbone, ResNet50Adapter, extract_features
from vidreid.errors import ShapeError

from conftest import fd_relative_error


def test_desk_output_is_16x8_for_256x128():
    net = DeskBackbone(out_channels=128).eval()
    out = extract_features(torch.randn(1, 2, 3, 256, 128), net)
    assert out.shape == (1, 2, 128, 16, 8)
    assert net.output_size() == (16, 8)


def test_stride_trace_matches_layer_stack():
    net = DeskBackbone()
    strides = [net.stem[0].stride[0]] + [blk.conv1.stride[0] for blk in net.stages]
    assert strides == [2, 2, 2, 2, 1]
    total = 1
    for s in strides:
        total *= s
    assert (256 // total, 128 // total) == (16, 8)


def test_zero_projection_on_zero_input_gives_zero_maps():
    net = DeskBackbone(out_channels=8, image_size=(32, 16)).eval()
    with torch.no_grad():
        net.proj.weight.zero_()
        net.proj.bias.zero_()
    out = net(torch.zeros(2, 3, 3, 32, 16))
    assert torch.count_nonzero(out) == 0


def test_identical_frames_give_identical_maps():
    torch.manual_seed(0)
    net = DeskBackbone(out_channels=16, image_size=(32, 16)).eval()
    frame = torch.randn(3, 32, 16)
    out = net(torch.stack([frame, frame])[None])
    assert torch.equal(out[0, 0], out[0, 1])


def test_eval_mode_is_bitwise_deterministic():
    torch.manual_seed(1)
    net = DeskBackbone(out_channels=16, image_size=(32, 16)).eval()
    x = torch.randn(2, 3, 3, 32, 16)
    assert torch.equal(net(x), net(x))


@pytest.mark.parametrize("shape", [(1, 2, 3, 64, 32), (1, 2, 1, 256, 128), (2, 3, 256, 128)])
def test_shape_mismatch_names_dimensions(shape):
    net = DeskBackbone()
    with pytest.raises(ShapeError, match=r"expected"):
        net(torch.zeros(shape))


def test_input_gradient_matches_finite_differences():
    torch.manual_seed(2)
    net = DeskBackbone(out_channels=4, widths=(4, 4, 4, 4), image_size=(4, 4),
                       stem_channels=4).double().eval()
    x = torch.randn(1, 1, 3, 4, 4, dtype=torch.float64, requires_grad=True)
    w = torch.randn(1, 1, 4, 1, 1, dtype=torch.float64)
    err = fd_relative_error(lambda: (net(x) * w).sum(), [x])
    assert err < 1e-4


def test_resnet_adapter_keeps_last_stage_at_stride_one():
    net = ResNet50Adapter(image_size=(64, 32)).eval()
    with torch.no_grad():
        out = net(torch.zeros(1, 1, 3, 64, 32))
    assert out.shape == (1, 1, 2048, 4, 2)
