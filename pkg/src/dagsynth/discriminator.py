"""The critic: scores encoded rows and supplies the adversarial losses.

A plain normalized multilayer perceptron scores each encoded row; training
uses the Wasserstein formulation with a gradient penalty. When conditioning
is enabled the encoded conditional-input blocks are concatenated to the
critic's input so that it can judge the joint, not just the marginal of the
generated variables.
"""

from __future__ import annotations

import math

import torch
from torch import Tensor, nn

from .errors import ShapeMismatch

LEAKY_SLOPE = 0.2
DEFAULT_GP_LAMBDA = 10.0


class Critic(nn.Module):
    """Affine stack with per-layer normalization and a scalar head."""

    def __init__(self, input_width: int, hidden: int = 200, n_hidden: int = 2, dtype=torch.float32):
        super().__init__()
        self.input_width = input_width
        widths = [input_width] + [hidden] * n_hidden
        layers = []
        for w_in, w_out in zip(widths[:-1], widths[1:]):
            layers.append(nn.Linear(w_in, w_out, dtype=dtype))
            layers.append(nn.LayerNorm(w_out, dtype=dtype))
            layers.append(nn.LeakyReLU(LEAKY_SLOPE))
        layers.append(nn.Linear(widths[-1], 1, dtype=dtype))
        self.stack = nn.Sequential(*layers)

    def init_parameters(self, seed: int) -> "Critic":
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for layer in self.stack:
                if isinstance(layer, nn.Linear):
                    bound = 1.0 / math.sqrt(layer.weight.shape[1])
                    layer.weight.uniform_(-bound, bound, generator=gen)
                    layer.bias.zero_()
                elif isinstance(layer, nn.LayerNorm):
                    layer.weight.fill_(1.0)
                    layer.bias.zero_()
        return self

    def forward(self, batch: Tensor) -> Tensor:
        if batch.ndim != 2 or batch.shape[1] != self.input_width:
            raise ShapeMismatch(
                f"critic expects (n, {self.input_width}), got {tuple(batch.shape)}"
            )
        return self.stack(batch).squeeze(1)


def score(critic: Critic, batch: Tensor) -> Tensor:
    """One finite scalar per row."""
    return critic(batch)


def adversarial_losses(
    real_scores: Tensor, fake_scores: Tensor, gp_term: Tensor | float, gp_lambda: float = DEFAULT_GP_LAMBDA
) -> tuple[Tensor, Tensor]:
    """Wasserstein losses: the critic drives real scores above fake ones,
    the generator drives fake scores up.

    loss_D = mean(fake) - mean(real) + lambda * gp_term
    loss_G = -mean(fake)
    """
    loss_d = fake_scores.mean() - real_scores.mean() + gp_lambda * gp_term
    loss_g = -fake_scores.mean()
    return loss_d, loss_g


def gradient_penalty(
    critic: Critic, real_batch: Tensor, fake_batch: Tensor, seed_or_gen
) -> Tensor:
    """Mean squared deviation of the critic's gradient norm from 1, measured
    at per-row random interpolates eps*real + (1-eps)*fake, eps ~ U(0,1)."""
    if real_batch.shape != fake_batch.shape:
        raise ShapeMismatch(
            f"real {tuple(real_batch.shape)} and fake {tuple(fake_batch.shape)} batches differ"
        )
    if isinstance(seed_or_gen, torch.Generator):
        gen = seed_or_gen
    else:
        gen = torch.Generator().manual_seed(int(seed_or_gen))
    eps = torch.rand(real_batch.shape[0], 1, generator=gen, dtype=real_batch.dtype)
    x_hat = (eps * real_batch + (1.0 - eps) * fake_batch).detach().requires_grad_(True)
    scores = critic(x_hat)
    grads = torch.autograd.grad(
        outputs=scores.sum(), inputs=x_hat, create_graph=True, retain_graph=True
    )[0]
    norms = grads.norm(2, dim=1)
    return ((norms - 1.0) ** 2).mean()
