"""Full network: backbone, correlation split, temporal recurrence and loss heads."""
from __future__ import annotations

import torch
from torch import nn

from .backbone import build_backbone
from .config import TrainConfig
from .gce import GCE, compute_global_descriptor
from .losses import OIMTable, SimilarityHead, oim_loss, total_loss, verification_loss
from .trl import TRL, test_time_embedding


class ReidNet(nn.Module):
    """Assembles the components enabled in ``config``.

    With both ``gce`` and ``trl`` off the network is the plain baseline: the
    backbone map averaged over time and space is the video feature. With
    ``gce`` only, the split features are averaged instead of recurred. With
    ``trl`` but no ``gce``, the undivided map feeds both recurrence inputs.
    """

    def __init__(self, config: TrainConfig, num_identities: int):
        super().__init__()
        self.config = config
        self.num_identities = num_identities
        c = config.channels
        self.backbone = build_backbone(config.backbone, c, config.image_size)
        if config.backbone != "desk":
            c = self.backbone.out_channels
        self.channels = c
        if config.gce:
            self.gce = GCE(c)
        if config.trl:
            self.trl = TRL(c, c, direction=config.direction, tied_weights=config.tied_weights,
                           enhancement=config.enhancement, memory=config.memory,
                           steps=config.T)
        if config.frame_oim:
            self.frame_table = OIMTable(num_identities, c, config.oim_momentum, config.oim_temperature)
        if config.video_oim:
            self.video_table = OIMTable(num_identities, c, config.oim_momentum, config.oim_temperature)
        if config.verification:
            self.sim_head = SimilarityHead(self.embedding_dim("joint"))

    @property
    def is_baseline(self) -> bool:
        return not (self.config.gce or self.config.trl)

    def embedding_dim(self, feature) -> int:
        if self.is_baseline or feature != "joint":
            return self.channels
        return 2 * self.channels

    def forward(self, frames, keep_trajectory=False) -> dict:
        x = self.backbone(frames)
        out = {"maps": x}
        if self.config.gce:
            high, low, corr = self.gce(x)
            out["corr"] = corr
        else:
            high = low = x
        if self.config.trl:
            res = self.trl(high, low, keep_trajectory)
            steps, low_vec = res[0], res[1]
            if keep_trajectory:
                out["directions"] = res[2]
        elif self.config.gce:
            steps = high.mean(dim=(3, 4))
            low_vec = compute_global_descriptor(low)
        else:
            steps = x.mean(dim=(3, 4))
            low_vec = compute_global_descriptor(x)
        emb = test_time_embedding(steps, low_vec, self.config.pool, normalize_halves=True)
        out.update(steps=steps, high=emb.high, low=emb.low, joint=emb.joint)
        if self.is_baseline:
            out["high"] = out["joint"] = low_vec
        return out

    def embed(self, out: dict, feature=None) -> torch.Tensor:
        return out[feature or self.config.test_feature]

    def losses(self, out: dict, labels: torch.Tensor, pairs=None) -> dict:
        """Loss components and their weighted total for one batch."""
        zero = out["low"].new_zeros(())
        parts = {"frame": zero, "video": zero, "veri": zero}
        if self.config.frame_oim:
            n, t, d = out["steps"].shape
            parts["frame"] = oim_loss(out["steps"].reshape(n * t, d),
                                      labels.repeat_interleave(t), self.frame_table)
        if self.config.video_oim:
            parts["video"] = oim_loss(out["low"], labels, self.video_table)
        if self.config.verification and pairs is not None:
            p_idx, g_idx, y = pairs
            joint = out["joint"]
            parts["veri"] = verification_loss(joint[p_idx], joint[g_idx], y, self.sim_head)
        parts["total"] = total_loss(parts["frame"], parts["video"], parts["veri"],
                                    self.config.loss_weights())
        return parts

    @torch.no_grad()
    def update_tables(self, out: dict, labels: torch.Tensor) -> None:
        if self.config.frame_oim:
            n, t, d = out["steps"].shape
            self.frame_table.update(out["steps"].reshape(n * t, d), labels.repeat_interleave(t))
        if self.config.video_oim:
            self.video_table.update(out["low"], labels)


def parameter_tree(model: nn.Module) -> dict:
    """State dict keyed as ``subtree/param`` (e.g. ``backbone/stem.0.weight``).

    The OIM tables live under ``oim/frame`` and ``oim/video``.
    """
    tree = {}
    for key, value in model.state_dict().items():
        head, _, rest = key.partition(".")
        if head in ("frame_table", "video_table"):
            head = "oim/" + head.split("_")[0]
        elif head == "trl":
            sub, _, rest = rest.partition(".")
            head = "trl/" + ({"w_high": "integrate", "w_low": "integrate"}.get(sub, sub))
            if sub in ("w_high", "w_low"):
                rest = f"{sub}.{rest}"
        elif head == "sim_head":
            head = "verification"
        tree[f"{head}/{rest}"] = value
    return tree


def load_parameter_tree(model: nn.Module, tree: dict) -> None:
    state = {}
    for key, value in tree.items():
        head, _, rest = key.rpartition("/")
        if head.startswith("oim/"):
            name = head[4:] + "_table." + rest
        elif head.startswith("trl/"):
            sub = head[4:]
            name = f"trl.{rest}" if sub == "integrate" else f"trl.{sub}.{rest}"
        elif head == "verification":
            name = "sim_head." + rest
        else:
            name = f"{head}.{rest}"
        state[name] = value
    model.load_state_dict(state)
