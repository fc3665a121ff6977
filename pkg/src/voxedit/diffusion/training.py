"""Joint training of the velocity predictor and speaker encoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, TrainingError
from ..numerics import Adam, Tensor, no_grad
from ..numerics.checkpoint import load_checkpoint, save_checkpoint
from ..numerics.rng import RngState
from .denoiser import Denoiser, DenoiserConfig
from .schedule import alpha_beta, sample
from .speaker_encoder import SpeakerEncoder

__all__ = ["DiffusionModel", "TrainSettings", "train_diffusion"]


@dataclass
class TrainSettings:
    steps: int = 3000
    batch_size: int = 8
    learning_rate: float = 2e-3
    crop_content: int = 24  # content frames per training crop (mel frames = 4x)
    log_every: int = 50


class DiffusionModel:
    """Denoiser + jointly trained speaker encoder behind one checkpoint."""

    def __init__(self, cfg: DenoiserConfig, seed: int = 0):
        self.cfg = cfg
        init = RngState(seed)
        self.denoiser = Denoiser(cfg, init.spawn(1))
        self.speaker_encoder = SpeakerEncoder(cfg.mel_bins, cfg.speaker_dim,
                                              init.spawn(2))

    def parameters(self):
        params = {f"denoiser.{k}": v for k, v in self.denoiser.parameters().items()}
        params.update({f"speaker_encoder.{k}": v
                       for k, v in self.speaker_encoder.parameters().items()})
        return params

    def encode_speaker(self, mel) -> np.ndarray:
        with no_grad():
            return self.speaker_encoder(Tensor._lift(mel)).data

    def sample(self, e_s, e_c, t_steps: int = 5, mode: str = "deterministic",
               rng: RngState | None = None) -> np.ndarray:
        def call(x_t, t, e_s_, e_c_):
            with no_grad():
                return self.denoiser(Tensor(x_t), t, Tensor._lift(e_s_),
                                     Tensor._lift(e_c_))
        return sample(call, e_s, e_c, t_steps, mode=mode, rng=rng,
                      mel_bins=self.cfg.mel_bins)

    def save(self, path) -> None:
        arrays = {k: p.data for k, p in self.parameters().items()}
        save_checkpoint(path, arrays)

    def load(self, path) -> None:
        state = load_checkpoint(path)
        den = {k[len("denoiser."):]: v for k, v in state.items()
               if k.startswith("denoiser.")}
        enc = {k[len("speaker_encoder."):]: v for k, v in state.items()
               if k.startswith("speaker_encoder.")}
        self.denoiser.load_state_dict(den)
        self.speaker_encoder.load_state_dict(enc)


def _crop(mel: np.ndarray, content: np.ndarray, crop_content: int,
          rng: RngState, upsample: int = 4):
    lc = content.shape[1]
    take = min(crop_content, lc)
    start = int(rng.integers(0, lc - take + 1)) if lc > take else 0
    return (mel[:, upsample * start: upsample * (start + take)],
            content[:, start: start + take])


def train_diffusion(dataset, model: DiffusionModel, rng: RngState,
                    settings: TrainSettings | None = None) -> list[float]:
    """Minimize the velocity MSE over random (t, noise) draws.

    ``dataset`` is a sequence of (mel values (F, L), content (D_C, L/4))
    pairs; the speaker embedding is extracted from the clean target mel each
    step so the encoder trains jointly. Returns the per-step loss history.
    """
    if len(dataset) == 0:
        raise ContractError("training needs a non-empty dataset")
    settings = settings or TrainSettings()
    opt = Adam(model.parameters(), lr=settings.learning_rate)
    history: list[float] = []

    for step in range(settings.steps):
        idx = rng.choice(len(dataset), settings.batch_size)
        mels, contents = [], []
        for i in idx:
            m, c = _crop(dataset[i][0], dataset[i][1], settings.crop_content, rng)
            mels.append(m)
            contents.append(c)
        x0 = np.stack(mels)  # (B, F, Lm)
        e_c = np.stack(contents)

        t = rng.uniform(0.0, 1.0, (len(idx),))
        eps = rng.normal(x0.shape)
        a, b = alpha_beta(t)
        a = a[:, None, None]
        b = b[:, None, None]
        x_t = a * x0 + b * eps
        v = a * eps - b * x0

        e_s = model.speaker_encoder(Tensor(x0))
        v_hat = model.denoiser(Tensor(x_t), t, e_s, Tensor(e_c))
        diff = v_hat - Tensor(v)
        loss = (diff * diff).mean()
        if not np.isfinite(loss.data):
            raise TrainingError(f"diffusion loss became non-finite at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(loss.item())
    return history
