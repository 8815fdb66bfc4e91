"""Deterministic, seedable experiment scenario generators.

Two families: colored-input system identification (an unknown FIR system
observed through additive noise) and CDMA multiple-access interference
suppression with Gold spreading codes. Both support a mid-run environment
change and derive every random quantity from named substreams of a single
64-bit seed, so identical seeds give bitwise-identical streams regardless
of how many samples are drawn or on which thread.

RNG contract: all draws come from ``numpy.random.Generator(PCG64(child))``
where ``child`` is obtained by spawning ``SeedSequence(seed)``. Substream
order (sysid): unknown system, coloring filter, input signal, noise,
post-change system, SNR calibration. Substream order (cdma): code
selection, chip offsets, data bits, noise, post-change selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterator

import numpy as np

GOLD_LENGTH = 31
GOLD_FAMILY_SIZE = 33


@dataclass(frozen=True)
class StreamSample:
    """One observation pair together with the hidden ground truth."""

    k: int
    u: np.ndarray
    d: float
    truth_h: np.ndarray | None = None
    truth_bit: int | None = None


def _spawn(seed: int, count: int):
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def _config_items(cfg) -> dict:
    out = {}
    for f in fields(cfg):
        val = getattr(cfg, f.name)
        out[f.name] = "" if val is None else str(val)
    return out


# ---------------------------------------------------------------------------
# system identification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SysIdConfig:
    """Colored-input system identification setting.

    The unknown system is a random unit-norm vector of length ``n``; the
    input is white Gaussian noise shaped by a random unit-energy FIR
    filter of length ``fir_len`` (weakly correlated input). ``snr_db``
    fixes the ratio of clean output power to noise power; ``math.inf``
    disables the noise.

    At ``change_at`` the unknown system is replaced while the input
    statistics (and the noise level) stay untouched, so only the
    cross-correlation vector changes. ``change_mode`` selects the
    replacement: ``"negate"`` flips the system's sign, the worst case for
    stale-statistics trackers since the exponentially weighted
    cross-correlation estimate must decay through zero while the Krylov
    geometry itself stays valid; ``"fresh"`` draws an independent random
    unit-norm system.
    """

    n: int = 50
    snr_db: float = 15.0
    fir_len: int = 30
    change_at: int | None = None
    change_mode: str = "negate"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.fir_len < 1:
            raise ValueError("fir_len must be positive")
        if not (math.isfinite(self.snr_db) or self.snr_db == math.inf):
            raise ValueError("snr_db must be finite or +inf")
        if self.change_mode not in ("negate", "fresh"):
            raise ValueError("change_mode must be negate or fresh")


class SysIdScenario:
    """Sample stream for a system identification experiment.

    Noise power is calibrated against the clean output power measured on a
    dedicated pre-roll of ``10 * n`` samples, so the realized SNR matches
    the target. The regressor window always contains real signal history
    (the input stream starts ``n - 1`` samples early).
    """

    kind = "sysid"

    def __init__(self, config: SysIdConfig):
        self.config = config
        n = config.n
        (rng_h, rng_fir, self._rng_input, self._rng_noise, rng_post,
         rng_calib) = _spawn(config.seed, 6)

        h = rng_h.standard_normal(n)
        self.h_star = h / np.linalg.norm(h)
        self.h_star.flags.writeable = False

        fir = rng_fir.standard_normal(config.fir_len)
        self.coloring_fir = fir / np.linalg.norm(fir)
        self.coloring_fir.flags.writeable = False

        if config.change_at is not None:
            if config.change_mode == "negate":
                hp = -self.h_star
            else:
                hp = rng_post.standard_normal(n)
                hp = hp / np.linalg.norm(hp)
            self.h_star_post = hp.copy()
            self.h_star_post.flags.writeable = False
        else:
            self.h_star_post = None

        if config.snr_db == math.inf:
            self.noise_std = 0.0
        else:
            calib = self._colored(10 * n + n - 1, rng_calib)
            z2 = 0.0
            count = 0
            for k in range(n - 1, len(calib)):
                window = calib[k - n + 1:k + 1][::-1]
                z = float(window @ self.h_star)
                z2 += z * z
                count += 1
            power = z2 / count
            self.noise_std = math.sqrt(power / (10.0 ** (config.snr_db / 10.0)))

    def _colored(self, count: int, rng) -> np.ndarray:
        white = rng.standard_normal(count + self.config.fir_len - 1)
        return np.convolve(white, self.coloring_fir, mode="valid")

    def truth_at(self, k: int) -> np.ndarray:
        c = self.config
        if c.change_at is not None and k >= c.change_at:
            return self.h_star_post
        return self.h_star

    def samples(self, count: int) -> Iterator[StreamSample]:
        """Generate ``count`` samples; restartable only via a fresh scenario."""
        n = self.config.n
        x = self._colored(count + n - 1, self._rng_input)
        noise = (self._rng_noise.standard_normal(count) * self.noise_std
                 if self.noise_std > 0.0 else np.zeros(count))
        for k in range(count):
            window = x[k:k + n][::-1].copy()
            truth = self.truth_at(k)
            d = float(window @ truth) + float(noise[k])
            yield StreamSample(k=k, u=window, d=d, truth_h=truth)

    def serialize(self) -> dict:
        meta = _config_items(self.config)
        meta["kind"] = self.kind
        meta["rng"] = "pcg64-seedsequence"
        meta["noise_std"] = f"{self.noise_std:.12g}"
        return meta


# ---------------------------------------------------------------------------
# CDMA interference suppression
# ---------------------------------------------------------------------------


def _msequence(poly_exponents, length: int = GOLD_LENGTH) -> np.ndarray:
    """Binary m-sequence with the given primitive characteristic polynomial.

    ``poly_exponents`` lists every exponent with a nonzero coefficient,
    including the degree itself, e.g. ``(5, 2, 0)`` for ``x^5 + x^2 + 1``.
    The recurrence is ``s[n+deg] = XOR of s[n+t]`` over the lower
    exponents ``t``.
    """
    degree = max(poly_exponents)
    lower = [t for t in poly_exponents if t != degree]
    state = [1] * degree  # state[i] holds s[n + degree - 1 - i]
    out = np.empty(length, dtype=int)
    for i in range(length):
        out[i] = state[-1]
        new = 0
        for t in lower:
            new ^= state[degree - 1 - t]
        state = [new] + state[:-1]
    return out


def gold_family() -> np.ndarray:
    """The 33 length-31 Gold sequences as rows of a +/-1 matrix.

    Built from the preferred pair of degree-5 feedback polynomials with
    octal tap masks 45 and 75; the family is the pair itself plus the 31
    cyclic-shift XOR combinations, mapped 0 -> +1 and 1 -> -1. Every pair
    of distinct members has periodic cross-correlation confined to
    {-1, -9, 7}.
    """
    u = _msequence((5, 2, 0))
    v = _msequence((5, 4, 3, 2, 0))
    rows = [u, v]
    for shift in range(GOLD_LENGTH):
        rows.append(np.bitwise_xor(u, np.roll(v, shift)))
    bits = np.array(rows)
    return (1 - 2 * bits).astype(float)


@dataclass(frozen=True)
class CdmaConfig:
    """Chip-synchronous, code-asynchronous CDMA interference suppression.

    ``users`` spreading codes are drawn without replacement from the
    length-31 Gold family and scaled to unit norm. The desired user is
    symbol-synchronous with the receiver window; every interferer has a
    fixed nonzero chip offset, so each of its symbols straddles the window
    boundary and it contributes two partial signatures (previous-bit tail,
    current-bit head) per observation. The desired user has amplitude one
    and every interferer amplitude ``interferer_amplitude``. ``snr_db`` is
    the ratio of the desired user's received power to the per-chip noise
    variance. At ``change_at`` every interferer leaves and
    ``users_post - 1`` fresh interferers (new codes, offsets, and bit
    streams) join; the desired user is untouched.
    """

    users: int = 8
    snr_db: float = 15.0
    interferer_amplitude: float = 1.0
    change_at: int | None = None
    users_post: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.users <= GOLD_FAMILY_SIZE:
            raise ValueError(f"users must lie in 1..{GOLD_FAMILY_SIZE}")
        if self.change_at is not None:
            if self.users_post is None:
                raise ValueError("users_post required with change_at")
            if not 1 <= self.users_post <= GOLD_FAMILY_SIZE:
                raise ValueError(f"users_post must lie in 1..{GOLD_FAMILY_SIZE}")
        if self.interferer_amplitude <= 0.0:
            raise ValueError("interferer_amplitude must be positive")


class _CdmaUser:
    """One active transmitter: unit-norm code, chip offset, bit memory."""

    def __init__(self, code: np.ndarray, delay: int, amplitude: float, prev_bit: int):
        self.amplitude = float(amplitude)
        self.delay = int(delay)
        n = code.shape[0]
        unit = code / np.linalg.norm(code)
        # chips [0, delay) of the window carry the previous symbol's last
        # chips; chips [delay, n) carry the current symbol's first chips
        self.tail = np.concatenate((unit[n - delay:], np.zeros(n - delay)))
        self.head = np.concatenate((np.zeros(delay), unit[:n - delay]))
        self.prev_bit = int(prev_bit)

    def emit(self, bit: int) -> np.ndarray:
        out = self.amplitude * (self.prev_bit * self.tail + bit * self.head)
        self.prev_bit = bit
        return out


class CdmaScenario:
    """Sample stream of received chip vectors with training bits.

    The desired user keeps index 0 (zero offset, so its whole symbol lies
    in the window); the training output is the desired user's bit.
    """

    kind = "cdma"
    n = GOLD_LENGTH

    def __init__(self, config: CdmaConfig):
        self.config = config
        (rng_codes, rng_delay, self._rng_bits, self._rng_noise,
         rng_post) = _spawn(config.seed, 5)
        family = gold_family()

        picks = rng_codes.choice(GOLD_FAMILY_SIZE, size=config.users, replace=False)
        self._desired_pick = int(picks[0])
        self.signature = family[self._desired_pick] / np.linalg.norm(family[self._desired_pick])
        self.signature.flags.writeable = False

        amp = config.interferer_amplitude
        self._pre_users = [_CdmaUser(family[self._desired_pick], 0, 1.0, 0)]
        for pick in picks[1:]:
            delay = int(rng_delay.integers(1, GOLD_LENGTH))
            prev = 1 - 2 * int(self._rng_bits.integers(0, 2))
            self._pre_users.append(_CdmaUser(family[int(pick)], delay, amp, prev))

        if config.change_at is not None:
            remaining = [i for i in range(GOLD_FAMILY_SIZE) if i != self._desired_pick]
            post_picks = rng_post.choice(remaining, size=config.users_post - 1,
                                         replace=False)
            self._post_users = []
            for pick in post_picks:
                delay = int(rng_post.integers(1, GOLD_LENGTH))
                prev = 1 - 2 * int(rng_post.integers(0, 2))
                self._post_users.append(_CdmaUser(family[int(pick)], delay, amp, prev))
        else:
            self._post_users = None

        snr = 10.0 ** (config.snr_db / 10.0)
        self.noise_std = math.sqrt(1.0 / snr) if math.isfinite(config.snr_db) else 0.0

    def samples(self, count: int) -> Iterator[StreamSample]:
        import copy

        users = [copy.copy(u) for u in self._pre_users]
        change = self.config.change_at
        for k in range(count):
            if change is not None and k == change:
                users = [users[0]] + [copy.copy(u) for u in self._post_users]
            u = np.zeros(self.n)
            desired_bit = 0
            for idx, user in enumerate(users):
                bit = 1 - 2 * int(self._rng_bits.integers(0, 2))
                if idx == 0:
                    desired_bit = bit
                u += user.emit(bit)
            if self.noise_std > 0.0:
                u = u + self.noise_std * self._rng_noise.standard_normal(self.n)
            yield StreamSample(k=k, u=u, d=float(desired_bit),
                               truth_bit=desired_bit)

    def serialize(self) -> dict:
        meta = _config_items(self.config)
        meta["kind"] = self.kind
        meta["rng"] = "pcg64-seedsequence"
        meta["asynchrony"] = "chip-offset-partial-symbols"
        meta["noise_std"] = f"{self.noise_std:.12g}"
        return meta
