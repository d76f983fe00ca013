"""End-to-end gradient verification of the combined training objective."""

from __future__ import annotations

from . import synth
from .model import KomeiModel, TrainConfig
from .numerics import grad_check


def full_model_grad_check(d_g: int = 8, batch: int = 4, n_categories: int = 3,
                          seed: int = 0, h: float = 3e-4) -> float:
    """Worst relative error between analytic and central-difference gradients
    of the full objective (prediction + both alignment terms) on a toy setup.
    """
    data = synth.generate("overfit", n_samples=max(batch, 8),
                          n_categories=n_categories, vocab_size=2 * n_categories,
                          dim=d_g, seed=seed)
    samples = data.samples[:batch]
    config = TrainConfig(d_g=d_g, d_v=d_g, d_s=d_g, d_t=d_g, seed=seed,
                         batch_size=batch, epochs=1)
    tokens = [t for s in samples for t in s.tokens]
    model = KomeiModel(config, data.categories, text_tokens=tokens)

    def loss_fn(_params):
        return model.forward(samples, data.tables, with_losses=True).j

    return grad_check(loss_fn, model.parameters(), h=h)
