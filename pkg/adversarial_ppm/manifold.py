"""Class-specific LSTM variational autoencoders over activity prefixes."""

import copy
import math
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.rnn import pack_padded_sequence
from tqdm import trange

from .encoding import (ActivitySequence, ActivityVocabulary, as_activities, decode_sequence_status,
                       index_encode)
from .errors import EncodingError, TrainingError
from .eventlog import PrefixLog

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VAEConfig:
    """Architecture and optimisation settings of one class VAE.

    ``free_bits`` is a per-dimension KL floor in nats: below it the KL term
    does not pull the posterior toward the prior. ``word_dropout`` blanks
    teacher-forced decoder inputs, so the decoder has to read z.
    The learning rate warms up over the first tenth of the steps, then
    follows a cosine decay.
    """

    latent_dim: int = 8
    hidden_size: int = 64
    epochs: int = 300
    learning_rate: float = 3e-3
    kl_weight: float = 1.0
    seed: int = 0
    max_len: int = 40
    batch_size: int = 32
    kl_anneal_epochs: int = 20
    free_bits: float = 0.75
    word_dropout: float = 0.25

    def validate(self, vocab_size: int) -> None:
        flat_dim = (self.max_len + 1) * vocab_size
        if not 1 <= self.latent_dim <= flat_dim:
            raise ValueError(f"latent_dim must lie in [1, {flat_dim}], got {self.latent_dim}")
        if self.hidden_size < 1 or self.epochs < 1 or self.batch_size < 1 or self.max_len < 1:
            raise ValueError("hidden_size, epochs, batch_size and max_len must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.kl_weight < 0 or self.free_bits < 0:
            raise ValueError("kl_weight and free_bits must be non-negative")
        if not 0.0 <= self.word_dropout < 1.0:
            raise ValueError(f"word_dropout must lie in [0, 1), got {self.word_dropout}")

    def kl_weight_at(self, epoch: int) -> float:
        """Monotonic KL warm-up over the first ``kl_anneal_epochs`` epochs."""
        if self.kl_anneal_epochs <= 0:
            return self.kl_weight
        return self.kl_weight * min(1.0, (epoch + 1) / self.kl_anneal_epochs)

    def learning_rate_factor(self, step: int, total_steps: int) -> float:
        """Linear warm-up over the first tenth of ``total_steps``, then cosine decay."""
        warmup = max(1, int(0.1 * total_steps))
        if step < warmup:
            return (step + 1) / warmup
        progress = (step - warmup) / max(1, total_steps - warmup)
        return 0.5 * (1.0 + math.cos(math.pi * min(1.0, progress)))


@dataclass(frozen=True)
class LatentPoint:
    """Diagonal Gaussian posterior; the variance is kept as log-variance."""

    mu: np.ndarray
    log_var: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * self.log_var)

    @property
    def dim(self) -> int:
        return int(self.mu.shape[0])


def reparameterize(point: LatentPoint, eps: np.ndarray) -> np.ndarray:
    """z = mu + eps * sigma."""
    eps = np.asarray(eps, dtype=point.mu.dtype)
    if eps.shape != point.mu.shape:
        raise ValueError(f"eps has shape {eps.shape}, latent point has {point.mu.shape}")
    return point.mu + eps * point.sigma


def gaussian_kl(mu: torch.Tensor, log_var: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, sigma^2) || N(0, I)) summed over latent dims, averaged over the batch."""
    per_item = -0.5 * torch.sum(1 + log_var - mu.pow(2) - log_var.exp(), dim=-1)
    return per_item.mean()


def free_bits_kl(mu: torch.Tensor, log_var: torch.Tensor, floor: float) -> torch.Tensor:
    """Batch-mean KL per latent dimension, each clamped from below at ``floor``, summed."""
    per_dim = (-0.5 * (1 + log_var - mu.pow(2) - log_var.exp())).mean(dim=0)
    return torch.clamp(per_dim, min=floor).sum()


def masked_nll(logits: torch.Tensor, targets: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Token cross-entropy summed over unmasked positions, averaged over the batch."""
    token_nll = F.cross_entropy(logits.transpose(1, 2), targets, reduction="none")
    return (token_nll * mask).sum(dim=1).mean()


class SequenceEncoder(nn.Module):

    def __init__(self, vocab_size: int, hidden_size: int, latent_dim: int):
        super().__init__()
        self.lstm = nn.LSTM(vocab_size, hidden_size, batch_first=True)
        self.to_mu = nn.Linear(hidden_size, latent_dim)
        self.to_log_var = nn.Linear(hidden_size, latent_dim)

    def forward(self, rows: torch.Tensor, lengths: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        packed = pack_padded_sequence(rows, lengths.cpu(), batch_first=True, enforce_sorted=False)
        _, (hidden, _) = self.lstm(packed)
        return self.to_mu(hidden[-1]), self.to_log_var(hidden[-1])


class SequenceDecoder(nn.Module):
    """Autoregressive decoder; z sets the initial state and is fed at every step."""

    def __init__(self, vocab_size: int, hidden_size: int, latent_dim: int, max_len: int):
        super().__init__()
        self.vocab_size = vocab_size
        self.steps = max_len + 1
        self.init_state = nn.Linear(latent_dim, 2 * hidden_size)
        self.cell = nn.LSTMCell(vocab_size + latent_dim, hidden_size)
        self.out = nn.Linear(hidden_size, vocab_size)

    def forward(self, z: torch.Tensor, teacher: Optional[torch.Tensor] = None,
                feed: str = "hard") -> torch.Tensor:
        """Return per-step logits of shape (batch, max_len + 1, vocab_size).

        feed: 'hard' feeds the argmax one-hot back, 'soft' the softmax row;
        ignored when ``teacher`` rows are given.
        """
        hidden, cell = torch.tanh(self.init_state(z)).chunk(2, dim=-1)
        previous = z.new_zeros(z.shape[0], self.vocab_size)
        logits = []
        for step in range(self.steps):
            hidden, cell = self.cell(torch.cat([previous, z], dim=-1), (hidden, cell))
            step_logits = self.out(hidden)
            logits.append(step_logits)
            if teacher is not None:
                previous = teacher[:, step]
            elif feed == "soft":
                previous = torch.softmax(step_logits, dim=-1)
            else:
                previous = F.one_hot(step_logits.argmax(dim=-1), self.vocab_size).to(z.dtype)
        return torch.stack(logits, dim=1)


class ClassManifold:
    """Trained VAE for the prefixes of one outcome class."""

    def __init__(self, class_label: int, vocab: ActivityVocabulary, config: VAEConfig,
                 encoder: SequenceEncoder, decoder: SequenceDecoder,
                 training_curve: List[Tuple[float, float]]):
        self.class_label = class_label
        self.vocab = vocab
        self.config = config
        self.encoder = encoder.eval()
        self.decoder = decoder.eval()
        self.training_curve = training_curve
        self._double_decoder: Optional[SequenceDecoder] = None

    def __getstate__(self) -> Dict:
        state = self.__dict__.copy()
        state["_double_decoder"] = None
        return state

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    @property
    def max_len(self) -> int:
        return self.config.max_len

    @property
    def total_losses(self) -> List[float]:
        return [nll + self.config.kl_weight * kl for nll, kl in self.training_curve]

    def header(self) -> Dict:
        return {"class_label": self.class_label, "vocab_hash": self.vocab.content_hash(),
                "config": asdict(self.config)}

    def _tensors(self, sequences: Sequence[ActivitySequence]):
        indices = np.stack([index_encode(s, self.vocab, self.max_len) for s in sequences])
        targets = torch.from_numpy(indices)
        rows = F.one_hot(targets, self.vocab.size).float()
        lengths = torch.tensor([len(as_activities(s)) + 1 for s in sequences])
        return rows, targets, lengths

    def encode_batch(self, sequences: Sequence[ActivitySequence]) -> Tuple[np.ndarray, np.ndarray]:
        """Posterior means and log-variances, shape (n, latent_dim) each."""
        if not sequences:
            empty = np.zeros((0, self.latent_dim), dtype=np.float32)
            return empty, empty.copy()
        rows, _, lengths = self._tensors(sequences)
        with torch.no_grad():
            mu, log_var = self.encoder(rows, lengths)
        return mu.numpy(), log_var.numpy()

    def encode(self, prefix: ActivitySequence) -> LatentPoint:
        mu, log_var = self.encode_batch([prefix])
        return LatentPoint(mu[0], log_var[0])

    def decode_status(self, z: np.ndarray) -> Tuple[Tuple[str, ...], str]:
        z = np.asarray(z, dtype=np.float32)
        if z.shape != (self.latent_dim,):
            raise EncodingError(f"z must have shape ({self.latent_dim},), got {z.shape}")
        with torch.no_grad():
            logits = self.decoder(torch.from_numpy(z).unsqueeze(0), feed="hard")[0]
        activities, status = decode_sequence_status(logits.numpy(), self.vocab)
        if status == "unterminated":
            logger.debug("decoded sequence has no EOS; truncating to max_len %d", self.max_len)
            activities = activities[:self.max_len]
        return activities, status

    def decode(self, z: np.ndarray) -> Tuple[str, ...]:
        """Greedy decode of z, truncated at the first EOS."""
        return self.decode_status(z)[0]

    def decode_soft(self, z: torch.Tensor) -> torch.Tensor:
        """Differentiable probability rows (batch, max_len + 1, vocab) for a batch of z.

        float64 input runs through a float64 copy of the decoder.
        """
        decoder = self.decoder
        if z.dtype == torch.float64:
            if self._double_decoder is None:
                self._double_decoder = copy.deepcopy(self.decoder).double().eval().requires_grad_(False)
            decoder = self._double_decoder
        return torch.softmax(decoder(z, feed="soft"), dim=-1)

    def elbo_components(self, batch: Sequence[ActivitySequence]) -> Tuple[float, float]:
        """Masked NLL (teacher-forced at z = mu) and KL to the standard normal prior."""
        if not batch:
            raise ValueError("elbo_components needs a non-empty batch")
        rows, targets, lengths = self._tensors(batch)
        mask = (torch.arange(targets.shape[1]).unsqueeze(0) < lengths.unsqueeze(1)).float()
        with torch.no_grad():
            mu, log_var = self.encoder(rows, lengths)
            logits = self.decoder(mu, teacher=rows)
            nll = masked_nll(logits, targets, mask)
            kl = gaussian_kl(mu, log_var)
        return float(nll), float(kl)

    def reconstruction_rate(self, prefixes: Sequence[ActivitySequence]) -> float:
        """Fraction of sequences reproduced exactly by decode(encode(p).mu)."""
        if not prefixes:
            return 0.0
        mu, _ = self.encode_batch(prefixes)
        hits = 0
        for sequence, z in zip(prefixes, mu):
            hits += self.decode(z) == as_activities(sequence)
        return hits / len(prefixes)

    def token_accuracy(self, prefixes: Sequence[ActivitySequence]) -> float:
        """Greedy-decode token accuracy over non-PAD positions at z = mu."""
        rows, targets, lengths = self._tensors(prefixes)
        mask = torch.arange(targets.shape[1]).unsqueeze(0) < lengths.unsqueeze(1)
        with torch.no_grad():
            mu, _ = self.encoder(rows, lengths)
            predicted = self.decoder(mu, feed="hard").argmax(dim=-1)
        correct = (predicted == targets) & mask
        return float(correct.sum()) / float(mask.sum())


def train_class_vae(prefixes: PrefixLog, vocab: ActivityVocabulary, config: VAEConfig,
                    progress: bool = False) -> ClassManifold:
    """Fit one VAE on the prefixes of a single class.

    Args:
        prefixes: Prefixes that all carry the same label
        vocab: Shared activity vocabulary
        config: Architecture and optimisation settings
        progress: Show a tqdm bar over epochs

    Returns:
        ClassManifold with per-epoch (nll, kl) training curve
    """
    if len(prefixes) == 0:
        raise TrainingError("cannot train a manifold on an empty prefix set")
    labels = {p.label for p in prefixes}
    if len(labels) != 1:
        raise TrainingError(f"class manifold needs prefixes of one label, got {sorted(labels)}")
    config.validate(vocab.size)

    torch.manual_seed(config.seed)
    generator = torch.Generator().manual_seed(config.seed)

    indices = np.stack([index_encode(p, vocab, config.max_len) for p in prefixes])
    targets = torch.from_numpy(indices)
    rows = F.one_hot(targets, vocab.size).float()
    lengths = torch.tensor([len(p) + 1 for p in prefixes])
    mask = (torch.arange(targets.shape[1]).unsqueeze(0) < lengths.unsqueeze(1)).float()

    encoder = SequenceEncoder(vocab.size, config.hidden_size, config.latent_dim)
    decoder = SequenceDecoder(vocab.size, config.hidden_size, config.latent_dim, config.max_len)
    parameters = list(encoder.parameters()) + list(decoder.parameters())
    optimizer = torch.optim.Adam(parameters, lr=config.learning_rate)
    n = len(prefixes)
    steps_per_epoch = -(-n // config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: config.learning_rate_factor(step, total_steps))

    curve: List[Tuple[float, float]] = []
    encoder.train()
    decoder.train()
    class_label = labels.pop()
    for epoch in trange(config.epochs, desc=f"VAE class {class_label}",
                        disable=not progress, leave=False):
        beta = config.kl_weight_at(epoch)
        order = torch.randperm(n, generator=generator)
        epoch_nll, epoch_kl = 0.0, 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            mu, log_var = encoder(rows[batch], lengths[batch])
            eps = torch.randn(mu.shape, generator=generator)
            z = mu + eps * torch.exp(0.5 * log_var)
            inputs = rows[batch]
            if config.word_dropout > 0:
                keep = torch.rand(inputs.shape[:2], generator=generator) >= config.word_dropout
                inputs = inputs * keep.unsqueeze(-1).float()
            logits = decoder(z, teacher=inputs)
            nll = masked_nll(logits, targets[batch], mask[batch])
            kl = gaussian_kl(mu, log_var)
            loss = nll + beta * free_bits_kl(mu, log_var, config.free_bits)
            if not torch.isfinite(loss):
                raise TrainingError(f"VAE loss diverged at epoch {epoch + 1}", epoch=epoch + 1)
            optimizer.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(parameters, 5.0)
            optimizer.step()
            scheduler.step()
            epoch_nll += float(nll) * len(batch)
            epoch_kl += float(kl) * len(batch)
        # the curve records the plain ELBO terms, not the clamped training objective
        curve.append((epoch_nll / n, epoch_kl / n))

    return ClassManifold(class_label, vocab, config, encoder, decoder, curve)
