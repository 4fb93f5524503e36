import os
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .granulometry import RosinRammlerModel, rr_cdf, rr_mean, rr_quantile
from .telemetry import Channel, TrialRecord, write_trial
from ..utils.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

GRAVITY = 9.81

# Operator label -> command oscillation (Hz), pile entry speed (m/s), lift cylinder at entry (mm)
OPERATOR_STYLES = {
    'A': {'operator_freq_hz': 0.8, 'entry_speed_m_s': 1.4, 'lift_at_entry_mm': 20.0},
    'B': {'operator_freq_hz': 1.2, 'entry_speed_m_s': 0.9, 'lift_at_entry_mm': 5.0},
    'C': {'operator_freq_hz': 0.6, 'entry_speed_m_s': 1.2, 'lift_at_entry_mm': 10.0},
}


def particle_mass_kg(d_mm, density_t_per_m3: float):
    """Mass rho * d^3 of a particle of size d (mm) in kg."""
    return density_t_per_m3 * 1e3 * np.power(np.asarray(d_mm, dtype=float) * 1e-3, 3)


@dataclass(frozen=True)
class RockPileSpec:
    """Rosin-Rammler pile truncated to [d_min_mm, d_max_mm]."""

    model: RosinRammlerModel
    d_max_mm: float
    label: str = ''
    density_t_per_m3: float = 2.63
    d_min_mm: float = 0.063

    def __post_init__(self):
        if not self.density_t_per_m3 > 0:
            raise DomainError(f"Pile {self.label}: density must be positive")
        if not 0 < self.d_min_mm < self.d_max_mm:
            raise DomainError(f"Pile {self.label}: need 0 < d_min < d_max, got {self.d_min_mm}, {self.d_max_mm}")

    def scaled(self, factor: float, label: Optional[str] = None) -> 'RockPileSpec':
        """Geometrically similar pile with every size multiplied by ``factor``."""
        return replace(
            self,
            model=RosinRammlerModel(self.model.n, self.model.x_c_mm * factor),
            d_max_mm=self.d_max_mm * factor,
            d_min_mm=self.d_min_mm * factor,
            label=label or f"{self.label}x{factor:g}",
        )

    def truncated_mean_mm(self) -> float:
        """Mass-weighted mean size of the truncated law."""
        lo, hi = rr_cdf(self.model, self.d_min_mm), rr_cdf(self.model, self.d_max_mm)
        n, x_c = self.model.n, self.model.x_c_mm

        def weighted(x):
            z = (x / x_c) ** n
            return n * z * np.exp(-z)

        value, _ = integrate.quad(weighted, self.d_min_mm, self.d_max_mm, limit=200)
        return float(value / (hi - lo))


@dataclass(frozen=True, eq=False)
class ParticlePopulation:
    """Particles grouped into size classes: counts[i] particles of diameters_mm[i]."""

    diameters_mm: np.ndarray
    counts: np.ndarray
    density_t_per_m3: float = 2.63
    label: str = ''

    def __post_init__(self):
        d = np.asarray(self.diameters_mm, dtype=float)
        c = np.asarray(self.counts, dtype=np.int64)
        if d.shape != c.shape or d.ndim != 1:
            raise DomainError("Population diameters and counts must be equal-length vectors")
        if np.any(d <= 0) or np.any(c < 0):
            raise DomainError("Population needs positive diameters and non-negative counts")
        keep = c > 0
        order = np.argsort(d[keep], kind='stable')
        object.__setattr__(self, 'diameters_mm', d[keep][order])
        object.__setattr__(self, 'counts', c[keep][order])

    @classmethod
    def from_diameters(cls, diameters_mm: Sequence[float], density_t_per_m3: float = 2.63,
                       label: str = '') -> 'ParticlePopulation':
        sizes, counts = np.unique(np.asarray(diameters_mm, dtype=float), return_counts=True)
        return cls(sizes, counts, density_t_per_m3, label)

    @property
    def masses_kg(self) -> np.ndarray:
        """Mass of one particle in each size class."""
        return particle_mass_kg(self.diameters_mm, self.density_t_per_m3)

    @property
    def class_masses_kg(self) -> np.ndarray:
        return self.counts * self.masses_kg

    @property
    def n_particles(self) -> int:
        return int(self.counts.sum())

    @property
    def total_mass_kg(self) -> float:
        return float(self.class_masses_kg.sum())

    def mass_pairs(self) -> np.ndarray:
        """(diameter, class mass) rows for empirical_mass_cdf."""
        return np.column_stack((self.diameters_mm, self.class_masses_kg))

    def size_at_mass_fraction(self, q: np.ndarray) -> np.ndarray:
        """Smallest size class whose cumulative mass fraction reaches q."""
        cumulative = np.cumsum(self.class_masses_kg) / self.total_mass_kg
        idx = np.searchsorted(cumulative, np.asarray(q, dtype=float), side='left')
        return self.diameters_mm[np.minimum(idx, self.diameters_mm.size - 1)]


def sample_population(spec: RockPileSpec, target_mass_kg: float, seed: int,
                      n_parcels: int = 4096) -> ParticlePopulation:
    """Draw a particle population whose mass follows the pile's size law.

    Mass parcels of equal weight are placed at stratified quantiles of the
    truncated law; each parcel becomes parcel_mass / m(d) particles, with
    counts rounded systematically in size order. Single particles are added
    until the total reaches the target.

    Args:
        spec: Pile description.
        target_mass_kg: Mass to reach.
        seed: Seed for the generator.
        n_parcels: Number of strata.

    Returns:
        ParticlePopulation with total mass >= target_mass_kg.
    """
    if not target_mass_kg > 0:
        raise DomainError(f"target_mass_kg must be positive, got {target_mass_kg}")
    lo, hi = rr_cdf(spec.model, spec.d_min_mm), rr_cdf(spec.model, spec.d_max_mm)
    if hi < 0.01 or hi - lo <= 0:
        raise DomainError(
            f"Pile {spec.label}: d_max {spec.d_max_mm} mm lies below the law's first percentile"
        )
    rng = np.random.default_rng(seed)

    levels = lo + (np.arange(n_parcels) + rng.random(n_parcels)) / n_parcels * (hi - lo)
    sizes = np.clip(rr_quantile(spec.model, levels), spec.d_min_mm, spec.d_max_mm)
    unit_mass = particle_mass_kg(sizes, spec.density_t_per_m3)
    expected = (target_mass_kg / n_parcels) / unit_mass
    cumulative = np.floor(np.cumsum(expected) + rng.random())
    counts = np.diff(np.concatenate(([0.0], cumulative))).astype(np.int64)

    total = float(np.sum(counts * unit_mass))
    extra: List[float] = []
    while total < target_mass_kg:
        d = float(np.clip(rr_quantile(spec.model, lo + rng.random() * (hi - lo)),
                          spec.d_min_mm, spec.d_max_mm))
        extra.append(d)
        total += float(particle_mass_kg(d, spec.density_t_per_m3))

    if extra:
        sizes = np.concatenate((sizes, extra))
        counts = np.concatenate((counts, np.ones(len(extra), dtype=np.int64)))
    classes, inverse = np.unique(sizes, return_inverse=True)
    merged = np.bincount(inverse, weights=counts).astype(np.int64)
    population = ParticlePopulation(classes, merged, spec.density_t_per_m3, spec.label)
    logger.debug(
        f"Population {spec.label}: {population.n_particles} particles, "
        f"{population.total_mass_kg:.2f} kg in {classes.size} size classes"
    )
    return population


def population_stats(pop: ParticlePopulation) -> Dict[str, float]:
    """Number-mean size, mass-weighted mean size, total mass and count."""
    if pop.n_particles == 0:
        raise DomainError("Statistics of an empty population")
    d = pop.diameters_mm
    mass = pop.class_masses_kg
    return {
        'd_bar_mm': float(np.sum(pop.counts * d) / pop.n_particles),
        'x_bar_mm': float(np.sum(mass * d) / np.sum(mass)),
        'M_kg': float(np.sum(mass)),
        'N': pop.n_particles,
    }


@dataclass(frozen=True)
class TrialSynthesisConfig:
    """Timing, sensor rates and impact physics of one synthetic excavation."""

    duration_s: float = 11.5
    onset_s: float = 2.0
    dig_s: float = 8.0
    imu_rate_hz: float = 1000.0
    pressure_rate_hz: float = 250.0
    extension_rate_hz: float = 250.0
    speed_rate_hz: float = 20.0
    collision_rate_per_s: float = 2.5
    impact_gain: float = 0.05
    amplitude_exponent: float = 1.0
    reference_size_mm: float = 50.0
    carrier_c1: float = 120000.0
    carrier_c2_mm: float = 400.0
    carrier_jitter: float = 0.1
    ring_cycles: float = 8.0
    entry_amplitude: float = 4.0
    entry_freq_hz: float = 80.0
    boom_gain: float = 0.6
    cross_axis_gain: float = 0.3
    operator_freq_hz: float = 1.0
    operator_amplitude: float = 0.5
    extension_oscillation_mm: float = 15.0
    final_extension_mm: float = 440.0
    final_lift_mm: float = 300.0
    entry_speed_m_s: float = 1.2
    lift_at_entry_mm: float = 0.0
    noise_std: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if self.onset_s < 0 or self.onset_s + self.dig_s > self.duration_s:
            raise ConfigError(
                f"onset_s + dig_s ({self.onset_s + self.dig_s}) must lie within duration_s ({self.duration_s})"
            )
        for name in ('dig_s', 'imu_rate_hz', 'pressure_rate_hz', 'extension_rate_hz', 'speed_rate_hz',
                     'carrier_c1', 'carrier_c2_mm', 'reference_size_mm', 'entry_freq_hz', 'ring_cycles'):
            if not getattr(self, name) > 0:
                raise ConfigError(f"TrialSynthesisConfig.{name} must be positive")
        for name in ('collision_rate_per_s', 'impact_gain', 'entry_amplitude',
                     'boom_gain', 'cross_axis_gain', 'operator_amplitude', 'operator_freq_hz',
                     'extension_oscillation_mm', 'noise_std', 'entry_speed_m_s', 'lift_at_entry_mm'):
            if getattr(self, name) < 0:
                raise ConfigError(f"TrialSynthesisConfig.{name} must be non-negative")
        if not 0 <= self.carrier_jitter < 1:
            raise ConfigError("carrier_jitter must lie in [0, 1)")
        top_carrier = self.carrier_c1 / self.carrier_c2_mm * (1.0 + self.carrier_jitter)
        if top_carrier >= self.imu_rate_hz / 2.0:
            raise ConfigError(
                f"Highest carrier {top_carrier:.1f} Hz is not below the IMU Nyquist {self.imu_rate_hz / 2.0} Hz"
            )

    def carrier_hz(self, d_mm):
        """Impact ringing frequency, decreasing with particle size."""
        return self.carrier_c1 / (np.asarray(d_mm, dtype=float) + self.carrier_c2_mm)

    def to_dict(self) -> dict:
        return asdict(self)


def impact_amplitude(d_mm, share_kg: float, cfg: TrialSynthesisConfig) -> np.ndarray:
    """Peak acceleration of a collision carrying ``share_kg`` of particles of size d.

    The share mass holds the momentum of its particles (each ∝ d^3 at the
    common entry speed); ``amplitude_exponent`` scales the response with the
    size of the particles making up the share.
    """
    d = np.asarray(d_mm, dtype=float)
    if np.any(d <= 0) or not share_kg > 0:
        raise DomainError("Impact needs positive sizes and share mass")
    return cfg.impact_gain * share_kg * np.power(d / cfg.reference_size_mm, cfg.amplitude_exponent)


@dataclass(frozen=True)
class _Impact:
    time_s: float
    amplitude: float
    freq_hz: float
    decay_s: float
    phase: float
    size_mm: float
    share: float


def _schedule_impacts(pop: ParticlePopulation, cfg: TrialSynthesisConfig,
                      rng: np.random.Generator) -> List[_Impact]:
    """Collision events of one dig, each standing for an equal share of the payload."""
    n_events = int(rng.poisson(cfg.collision_rate_per_s * cfg.dig_s))
    if n_events == 0:
        return []
    u = np.sort(rng.random(n_events))
    # density falls linearly to zero at the end of the dig
    times = cfg.onset_s + cfg.dig_s * (1.0 - np.sqrt(1.0 - u))
    levels = (np.arange(n_events) + rng.random(n_events)) / n_events
    sizes = rng.permutation(pop.size_at_mass_fraction(levels))

    share = pop.total_mass_kg / n_events
    amplitudes = impact_amplitude(sizes, share, cfg)
    freqs = cfg.carrier_hz(sizes) * (1.0 + cfg.carrier_jitter * (2.0 * rng.random(n_events) - 1.0))
    # same number of cycles for every ring; lower carriers ring longer
    decays = cfg.ring_cycles / freqs
    phases = rng.uniform(0.0, 2.0 * np.pi, n_events)
    return [
        _Impact(float(t), float(a), float(f), float(tau), float(ph), float(d), 1.0 / n_events)
        for t, a, f, tau, ph, d in zip(times, amplitudes, freqs, decays, phases, sizes)
    ]


def _ring(times: np.ndarray, start_s: float, amplitude: float, freq_hz: float,
          decay_s: float, phase: float) -> np.ndarray:
    """Damped sinusoid with a quarter-period attack, zero before ``start_s``."""
    out = np.zeros_like(times)
    first = int(np.searchsorted(times, start_s, side='left'))
    last = int(np.searchsorted(times, start_s + 10.0 * decay_s + 1.0 / freq_hz, side='right'))
    dt = times[first:last] - start_s
    attack = 0.25 / freq_hz
    out[first:last] = (amplitude * np.exp(-dt / decay_s) * -np.expm1(-dt / attack)
                       * np.sin(2.0 * np.pi * freq_hz * dt + phase))
    return out


def _loaded_fraction(times: np.ndarray, impacts: List[_Impact], cfg: TrialSynthesisConfig) -> np.ndarray:
    """Share of the payload in the bucket, each impact adding its share over 0.1 s."""
    loaded = np.zeros_like(times)
    for impact in impacts:
        dt = np.clip(times - impact.time_s, 0.0, None)
        loaded += impact.share * -np.expm1(-dt / 0.1)
    if not impacts:
        loaded = np.clip((times - cfg.onset_s) / cfg.dig_s, 0.0, 1.0)
    return loaded


def synthesize_trial(pop: ParticlePopulation, cfg: TrialSynthesisConfig, trial_id: str = 'sim-0000',
                     pile_label: Optional[str] = None, operator: str = 'A', day: int = 1) -> TrialRecord:
    """Synthesize every telemetry channel of one excavation pass.

    Accelerations are a sum of impact ringing (plus the bucket-entry impact
    at onset), the operator's command oscillation, gravity on the vertical
    axes and white noise. Pressures follow the loaded mass; the bucket
    cylinder ramps out over the dig.

    Args:
        pop: Particles in this bucket load.
        cfg: Synthesis settings; ``cfg.seed`` fixes every random draw.
        trial_id: Identifier of the produced trial.
        pile_label: Defaults to the population label.
        operator: Operator label stored on the trial.
        day: Campaign day stored on the trial.

    Returns:
        TrialRecord with every registry channel and payload_mass_kg = population mass.
    """
    if pop.n_particles == 0:
        raise DomainError("Cannot synthesize a trial from an empty population")
    rng = np.random.default_rng(cfg.seed)
    impacts = _schedule_impacts(pop, cfg, rng)
    op_phase = rng.uniform(0.0, 2.0 * np.pi)

    def timeline(rate_hz: float) -> np.ndarray:
        return np.arange(int(np.floor(cfg.duration_s * rate_hz)) + 1) / rate_hz

    def operator_wave(t: np.ndarray) -> np.ndarray:
        return np.sin(2.0 * np.pi * cfg.operator_freq_hz * t + op_phase)

    def noise(size: int, scale: float = 1.0) -> np.ndarray:
        return rng.normal(0.0, cfg.noise_std * scale, size) if cfg.noise_std > 0 else np.zeros(size)

    t_imu = timeline(cfg.imu_rate_hz)
    digging = ((t_imu >= cfg.onset_s) & (t_imu <= cfg.onset_s + cfg.dig_s)).astype(float)
    impact_signal = np.zeros_like(t_imu)
    if impacts:
        impact_signal += _ring(t_imu, cfg.onset_s, cfg.entry_amplitude, cfg.entry_freq_hz,
                               1.0 / cfg.entry_freq_hz, 0.5 * np.pi)
    for impact in impacts:
        impact_signal += _ring(t_imu, impact.time_s, impact.amplitude, impact.freq_hz,
                               impact.decay_s, impact.phase)
    command = cfg.operator_amplitude * operator_wave(t_imu) * digging
    n_imu = t_imu.size

    channels: Dict[str, Channel] = {}

    def add(name: str, rate_hz: float, samples: np.ndarray, units: str):
        channels[name] = Channel(name=name, rate_hz=rate_hz, samples=samples, units=units)

    add('bucket_acc_x', cfg.imu_rate_hz, cfg.cross_axis_gain * impact_signal + command + noise(n_imu), 'm/s^2')
    add('bucket_acc_y', cfg.imu_rate_hz, 0.5 * cfg.cross_axis_gain * impact_signal + noise(n_imu), 'm/s^2')
    add('bucket_acc_z', cfg.imu_rate_hz, GRAVITY + impact_signal + command + noise(n_imu), 'm/s^2')
    boom_signal = cfg.boom_gain * impact_signal
    add('boom_acc_x', cfg.imu_rate_hz, boom_signal + 0.5 * command + noise(n_imu), 'm/s^2')
    add('boom_acc_y', cfg.imu_rate_hz, cfg.cross_axis_gain * boom_signal + noise(n_imu), 'm/s^2')
    add('boom_acc_z', cfg.imu_rate_hz, GRAVITY + cfg.cross_axis_gain * boom_signal + noise(n_imu), 'm/s^2')

    t_p = timeline(cfg.pressure_rate_hz)
    loaded = _loaded_fraction(t_p, impacts, cfg)
    ripple = operator_wave(t_p) * ((t_p >= cfg.onset_s) & (t_p <= cfg.onset_s + cfg.dig_s))
    p_base = 30.0 + 150.0 * loaded + 5.0 * ripple + noise(t_p.size, 20.0)
    p_rod = 20.0 + 10.0 * loaded - 2.0 * ripple + noise(t_p.size, 20.0)
    add('p_base', cfg.pressure_rate_hz, np.clip(p_base, 0.0, 400.0), 'bar')
    add('p_rod', cfg.pressure_rate_hz, np.clip(p_rod, 0.0, 400.0), 'bar')

    t_d = timeline(cfg.extension_rate_hz)
    progress = np.clip((t_d - cfg.onset_s) / cfg.dig_s, 0.0, 1.0)
    in_dig = (t_d >= cfg.onset_s) & (t_d <= cfg.onset_s + cfg.dig_s)
    d_bucket = cfg.final_extension_mm * progress + cfg.extension_oscillation_mm * operator_wave(t_d) * in_dig
    add('d_bucket', cfg.extension_rate_hz, np.clip(d_bucket, 0.0, None), 'mm')
    add('d_lift', cfg.extension_rate_hz, cfg.lift_at_entry_mm + cfg.final_lift_mm * progress, 'mm')

    t_v = timeline(cfg.speed_rate_hz)
    after = np.clip(t_v - cfg.onset_s, 0.0, None)
    # constant approach speed, braking to a crawl in the pile
    crawl = min(0.2, cfg.entry_speed_m_s)
    speed = crawl + (cfg.entry_speed_m_s - crawl) * np.exp(-after / 0.3) + noise(t_v.size, 2.0)
    add('speed', cfg.speed_rate_hz, speed, 'm/s')

    return TrialRecord(
        trial_id=trial_id,
        pile_label=pile_label if pile_label is not None else pop.label,
        operator=operator,
        day=day,
        channels=channels,
        payload_mass_kg=pop.total_mass_kg,
    )


def trial_seed(seed: int, pile_index: int, trial_index: int) -> int:
    """Independent per-trial seed derived from the campaign seed."""
    return int(np.random.SeedSequence([seed, pile_index, trial_index]).generate_state(1)[0])


@dataclass
class SimulatedTrial:
    """A synthetic trial and the ground truth it was generated from."""

    trial: TrialRecord
    onset_s: float
    stats: Dict[str, float] = field(default_factory=dict)


def simulate_pile(spec: RockPileSpec, n_trials: int, cfg: TrialSynthesisConfig, seed: int,
                  target_mass_kg: float = 2000.0, pile_index: int = 0,
                  operators: Sequence[str] = ('A',), days: Sequence[int] = (1,),
                  id_prefix: Optional[str] = None) -> List[SimulatedTrial]:
    """Generate ``n_trials`` independent buckets from one pile.

    Trials cycle through ``operators`` and ``days``; operators listed in
    OPERATOR_STYLES get their command rhythm, entry speed and lift position.
    """
    prefix = id_prefix or spec.label.replace('/', '_')
    results = []
    for k in range(n_trials):
        s = trial_seed(seed, pile_index, k)
        operator = operators[k % len(operators)]
        trial_cfg = replace(cfg, seed=s, **OPERATOR_STYLES.get(operator, {}))
        pop = sample_population(spec, target_mass_kg, s)
        trial = synthesize_trial(pop, trial_cfg, trial_id=f"{prefix}-{k:04d}", pile_label=spec.label,
                                 operator=operator, day=int(days[k % len(days)]))
        results.append(SimulatedTrial(trial=trial, onset_s=cfg.onset_s, stats=population_stats(pop)))
    return results


def generate_campaign(piles: Sequence[RockPileSpec], trials_per_pile: int, cfg: TrialSynthesisConfig,
                      seed: int, target_mass_kg: float = 2000.0, operators: Sequence[str] = ('A', 'B'),
                      days: Sequence[int] = (1,)) -> Tuple[List[SimulatedTrial], dict]:
    """Simulate several piles and collect the ground-truth record.

    Returns:
        (trials sorted by trial_id, ground-truth dictionary)
    """
    if trials_per_pile < 1:
        raise ConfigError("trials_per_pile must be at least 1")
    trials: List[SimulatedTrial] = []
    truth_piles = {}
    for index, spec in enumerate(piles):
        logger.info(f"Simulating pile {spec.label}: {trials_per_pile} trials")
        trials.extend(simulate_pile(spec, trials_per_pile, cfg, seed, target_mass_kg, index, operators, days))
        truth_piles[spec.label] = {
            'n': spec.model.n,
            'x_c_mm': spec.model.x_c_mm,
            'd_min_mm': spec.d_min_mm,
            'd_max_mm': spec.d_max_mm,
            'density_t_per_m3': spec.density_t_per_m3,
            'x_bar_mm': rr_mean(spec.model),
            'x_bar_truncated_mm': spec.truncated_mean_mm(),
        }

    trials.sort(key=lambda s: s.trial.trial_id)
    truth = {
        'seed': seed,
        'target_mass_kg': target_mass_kg,
        'piles': truth_piles,
        'trials': {
            s.trial.trial_id: {
                'pile_label': s.trial.pile_label,
                'operator': s.trial.operator,
                'day': s.trial.day,
                'onset_s': s.onset_s,
                **s.stats,
            }
            for s in trials
        },
    }
    return trials, truth


def write_campaign(trials: Sequence[SimulatedTrial], truth: dict, out_dir: str) -> str:
    """Write every trial plus ``ground_truth.json`` under ``out_dir``.

    Returns:
        Path of the ground-truth sidecar.
    """
    os.makedirs(out_dir, exist_ok=True)
    for sim in trials:
        write_trial(sim.trial, out_dir)
    path = os.path.join(out_dir, 'ground_truth.json')
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(truth, f, indent=2, sort_keys=True)
        f.write('\n')
    logger.info(f"Wrote {len(trials)} trials and ground truth to {out_dir}")
    return path
