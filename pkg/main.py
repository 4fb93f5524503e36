#!/usr/bin/env python3

import os
import json
import sys
import glob
import argparse
import logging
from typing import Dict, List, Optional, Tuple

import pandas as pd
from dotenv import load_dotenv

from src.processors.telemetry import discover_manifests, load_trial_from_manifest
from src.processors.cwt import export_scalogram_csv, export_scalogram_png
from src.processors.features import WaveletFeature
from src.processors.feature_extractor import FeatureExtractor
from src.processors.dig_stats import collect_dig_statistics, summarize_dig_statistics, write_dig_statistics
from src.processors.granulometry import fit_rr, fit_residual_ss, load_sieve_table, refine_rr, rr_mean, sieve_mean_size
from src.processors.relative import (
    ReferenceCalibration,
    Z_THRESHOLDS,
    build_report,
    calibrate,
    classification_accuracy,
    classify,
    expected_classes,
    per_trial_estimates,
    sieve_ratios,
    summarize,
    write_plot_data,
)
from src.processors.simulate import generate_campaign, write_campaign
from src.utils.config import SOURCES, PipelineConfig, default_threads, load_config
from src.utils.errors import ConfigError, DataError, Dig2SizeError, InsufficientDataError
from src.utils.pile_presets import PilePresets
from src.utils.provenance import SCHEMA_VERSION, build_provenance, file_digest, input_digests, write_json

logger = logging.getLogger(__name__)


class CommandLineParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def provenance(config: PipelineConfig, inputs: Optional[Dict[str, str]] = None) -> dict:
    return build_provenance(config.to_dict(), PipelineConfig.defaults().to_dict(), config.overrides(), inputs)


def parse_sources(value: Optional[str]) -> List[str]:
    """'bucket', 'boom,lift' or 'all' -> list of sources."""
    if not value:
        return ['bucket']
    if value == 'all':
        return list(SOURCES)
    sources = [s.strip().split(':', 1)[0] for s in value.split(',') if s.strip()]
    unknown = [s for s in sources if s not in SOURCES]
    if unknown:
        raise ConfigError(f"Unknown source(s) {', '.join(unknown)}. Available: {', '.join(SOURCES)}, all")
    return sources


def load_feature_report(path: str) -> List[WaveletFeature]:
    """Read the features.json written by the features command."""
    if not os.path.exists(path):
        raise DataError(f"Feature report not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        report = json.load(f)
    if 'features' not in report:
        raise DataError(f"{path} is not a feature report")
    return [WaveletFeature.from_row(row) for row in report['features']]


def reference_source(args, config: PipelineConfig) -> str:
    """Single source (or source:epoch) named on the command line, else the configured one."""
    value = args.source
    if value and ',' not in value and value != 'all':
        source = value.split(':', 1)[0]
        if source not in SOURCES:
            raise ConfigError(f"Unknown source '{source}'. Available: {', '.join(SOURCES)}")
        return value
    return config.reference.source


def resolve_reference(features: List[WaveletFeature], config: PipelineConfig, args) -> ReferenceCalibration:
    """Calibration from --calibration, or computed from the reference group of the features."""
    if getattr(args, 'calibration', None):
        if not os.path.exists(args.calibration):
            raise DataError(f"Calibration file not found: {args.calibration}")
        with open(args.calibration, 'r', encoding='utf-8') as f:
            return ReferenceCalibration.from_dict(json.load(f)['reference'])

    scope = config.reference
    pile = args.pile or scope.pile
    source = reference_source(args, config)
    operator = args.operator if args.operator is not None else scope.operator
    if not any(f.pile_label == pile and f.kind == 'zeta' for f in features):
        raise ConfigError(f"Reference pile {pile} has no zeta features in the report")
    return calibrate(features, source, pile, operator=operator, xbar_ref_mm=getattr(args, 'xbar', None))


def cmd_simulate(args, config: PipelineConfig) -> int:
    """Generate a simulated campaign plus its ground-truth sidecar."""
    if args.list_presets:
        print("Available pile presets:")
        for label in PilePresets.list_piles():
            pile = PilePresets.get_pile(label)
            print(f"  {label}: n={pile.model.n}, x_c={pile.model.x_c_mm} mm, "
                  f"x_bar={rr_mean(pile.model):.1f} mm, d_max={pile.d_max_mm} mm")
        print("Available campaigns:")
        for name in PilePresets.list_campaigns():
            print(f"  {name}")
        return 0

    settings = config.campaign
    preset = args.preset or settings.preset
    piles = PilePresets.get_campaign(preset)
    n_trials = args.trials or settings.trials_per_pile
    out_dir = args.out or config.output_dir

    logger.info(f"Step 1: Simulating {len(piles)} pile(s) x {n_trials} trials (preset {preset}, seed {settings.seed})...")
    trials, truth = generate_campaign(piles, n_trials, config.synthesis, settings.seed,
                                      target_mass_kg=settings.target_mass_kg,
                                      operators=settings.operators, days=settings.days)
    truth['schema_version'] = SCHEMA_VERSION
    truth['preset'] = preset
    truth['provenance'] = provenance(config)

    logger.info(f"Step 2: Writing campaign to {out_dir}...")
    write_campaign(trials, truth, out_dir)
    return 0


def load_trials(manifests: List[str]) -> Tuple[list, List[Dict[str, str]]]:
    """Load every manifest, collecting the ones that fail."""
    trials = []
    load_errors = []
    for path in manifests:
        try:
            trials.append(load_trial_from_manifest(path))
        except DataError as e:
            logger.error(f"Error loading {path}: {str(e)}")
            load_errors.append({'trial_id': os.path.splitext(os.path.basename(path))[0], 'error': str(e)})
    return trials, load_errors


def cmd_features(args, config: PipelineConfig) -> int:
    """Extract beta and zeta from every trial manifest in a directory."""
    manifests = discover_manifests(args.manifest_dir)
    if not manifests:
        raise DataError(f"No trials found in {args.manifest_dir}")
    sources = parse_sources(args.source)
    out_dir = args.out or config.output_dir

    logger.info(f"Step 1: Loading {len(manifests)} trials...")
    trials, load_errors = load_trials(manifests)

    logger.info(f"Step 2: Extracting features ({', '.join(sources)})...")
    extractor = FeatureExtractor(config)
    result = extractor.extract_all(trials, sources, threads=config.threads)
    errors = sorted(load_errors + result.errors, key=lambda e: e['trial_id'])

    if args.scalograms:
        logger.info("Step 3: Exporting scalograms...")
        failed = {e['trial_id'] for e in errors}
        scalogram_dir = os.path.join(out_dir, 'scalograms')
        os.makedirs(scalogram_dir, exist_ok=True)
        for trial in trials:
            if trial.trial_id in failed:
                continue
            for source in sources:
                scalogram, _ = extractor.scalogram(trial, source)
                stem = os.path.join(scalogram_dir, f"{trial.trial_id}_{source}")
                export_scalogram_csv(scalogram, f"{stem}.csv")
                export_scalogram_png(scalogram, f"{stem}.png")

    rows = [f.to_row() for f in result.features]
    report = {
        'schema_version': SCHEMA_VERSION,
        'features': rows,
        'errors': errors,
        'provenance': provenance(config, input_digests(manifests, args.manifest_dir)),
    }
    write_json(report, os.path.join(out_dir, 'features.json'))
    pd.DataFrame(rows).to_csv(
        os.path.join(out_dir, 'features.csv'), index=False, float_format='%.10g'
    )
    logger.info(f"Wrote {len(rows)} feature rows to {out_dir}")
    if errors:
        for error in errors:
            logger.error(f"Trial {error['trial_id']}: {error['error']}")
        logger.error(f"{len(errors)} of {len(manifests)} trials failed")
        return 2
    return 0


def cmd_dig_stats(args, config: PipelineConfig) -> int:
    """Dig time, entry speed and cylinder positions at entry, per trial and per operator and day."""
    manifests = discover_manifests(args.manifest_dir)
    if not manifests:
        raise DataError(f"No trials found in {args.manifest_dir}")
    out_dir = args.out or config.output_dir

    logger.info(f"Step 1: Loading {len(manifests)} trials...")
    trials, load_errors = load_trials(manifests)

    logger.info("Step 2: Measuring digs...")
    stats, stat_errors = collect_dig_statistics(trials, config.detector_for('bucket'))
    errors = sorted(load_errors + stat_errors, key=lambda e: e['trial_id'])
    if not stats:
        raise InsufficientDataError(f"No trial in {args.manifest_dir} could be measured")
    summary = summarize_dig_statistics(stats)
    for row in summary:
        logger.info(f"Operator {row['operator']} day {row['day']}: n={row['n']}, "
                    f"dig {row['dig_time_s_mean']:.2f} s, entry {row['entry_speed_m_s_mean']:.2f} m/s, "
                    f"lift at entry {row['d_lift_at_entry_mm_mean']:.1f} mm")

    write_dig_statistics(stats, summary, out_dir)
    report = {
        'schema_version': SCHEMA_VERSION,
        'trials': [s.to_row() for s in stats],
        'summary': summary,
        'errors': errors,
        'provenance': provenance(config, input_digests(manifests, args.manifest_dir)),
    }
    write_json(report, os.path.join(out_dir, 'dig_stats.json'))
    if errors:
        logger.error(f"{len(errors)} of {len(manifests)} trials failed")
        return 2
    return 0


def cmd_fit_rr(args, config: PipelineConfig) -> int:
    """Fit a Rosin-Rammler model to one sieve table."""
    table = load_sieve_table(args.sieve_csv, pile_label=args.pile)
    constraints = (args.p_lo, (args.p_hi_min, args.p_hi_max))
    model = fit_rr(table, *constraints)
    method = 'linearized'
    if args.refine:
        model = refine_rr(table, model, *constraints)
        method = 'least_squares'

    print(f"{table.pile_label}: n = {model.n:.4f}, x_c = {model.x_c_mm:.2f} mm, x_bar = {rr_mean(model):.2f} mm")
    result = {
        'schema_version': SCHEMA_VERSION,
        'pile': table.pile_label,
        'method': method,
        'model': model.to_dict(),
        'residual_ss': fit_residual_ss(table, model, *constraints),
        'constraints': {'p_lo': args.p_lo, 'p_hi_range': [args.p_hi_min, args.p_hi_max]},
        'provenance': provenance(config, {os.path.basename(args.sieve_csv): file_digest(args.sieve_csv)}),
    }
    out_dir = args.out or config.output_dir
    write_json(result, os.path.join(out_dir, f"rr_{table.pile_label.replace('/', '_')}.json"))
    return 0


def cmd_calibrate(args, config: PipelineConfig) -> int:
    """Estimate the reference distribution of zeta and save it."""
    features = load_feature_report(args.features)
    ref = resolve_reference(features, config, args)
    document = {
        'schema_version': SCHEMA_VERSION,
        'reference': ref.to_dict(),
        'provenance': provenance(config, {os.path.basename(args.features): file_digest(args.features)}),
    }
    write_json(document, os.path.join(args.out or config.output_dir, 'calibration.json'))
    print(f"Reference {ref.pile_label} on {ref.source}: mu = {ref.mu_ref:.6g}, sigma = {ref.sigma_ref:.6g}, n = {ref.n_trials}")
    return 0


def _sieve_estimate(args, config: PipelineConfig) -> int:
    paths = sorted(glob.glob(os.path.join(args.sieve_dir, '*.csv')))
    if not paths:
        raise DataError(f"No sieve tables found in {args.sieve_dir}")
    means = {}
    for path in paths:
        table = load_sieve_table(path)
        means[table.pile_label] = sieve_mean_size(table, round_mm=True, refine=args.refine)
    reference = args.pile or config.reference.pile
    if reference not in means:
        raise ConfigError(f"Reference pile {reference} has no sieve table in {args.sieve_dir}")
    ratios = sieve_ratios(means, reference)
    for pile, ratio in ratios.items():
        print(f"  {pile}: x_bar = {means[pile]:.0f} mm, ratio = {ratio:.3f}")
    document = {
        'schema_version': SCHEMA_VERSION,
        'mode': 'sieve',
        'reference': {'pile': reference, 'xbar_mm': means[reference]},
        'rows': [{'pile': pile, 'xbar_mm': means[pile], 'ratio': ratios[pile]} for pile in ratios],
        'provenance': provenance(config, input_digests(paths, args.sieve_dir)),
    }
    write_json(document, os.path.join(args.out or config.output_dir, 'sieve_estimate.json'))
    return 0


def _estimate_document(features: List[WaveletFeature], config: PipelineConfig, args,
                       inputs: Dict[str, str]) -> Tuple[dict, List[dict]]:
    ref = resolve_reference(features, config, args)
    rows = summarize(per_trial_estimates(features, ref))
    for row in rows:
        row['is_reference'] = row['pile'] == ref.pile_label

    accuracy = None
    if getattr(args, 'truth', None):
        with open(args.truth, 'r', encoding='utf-8') as f:
            truth = json.load(f)
        pile_means = {pile: entry['x_bar_mm'] for pile, entry in truth['piles'].items()}
        expected = expected_classes(pile_means, ref.pile_label)
        scoped = [f for f in features if f.source == ref.source]
        accuracy = {f"{p:.2f}": classification_accuracy(scoped, ref, expected, p) for p in sorted(Z_THRESHOLDS)}
        inputs = dict(inputs, **{os.path.basename(args.truth): file_digest(args.truth)})

    return build_report(ref, rows, provenance(config, inputs), accuracy), rows


def cmd_estimate(args, config: PipelineConfig) -> int:
    """Relative mean sizes and class counts against the reference pile."""
    if args.sieve_dir:
        return _sieve_estimate(args, config)
    if not args.features:
        raise ConfigError("estimate needs a feature report or --sieve-dir")

    features = load_feature_report(args.features)
    out_dir = args.out or config.output_dir
    report, rows = _estimate_document(features, config, args,
                                      {os.path.basename(args.features): file_digest(args.features)})
    write_json(report, os.path.join(out_dir, 'estimate.json'))
    write_plot_data(rows, features, out_dir)
    for row in rows:
        marker = ' (ref)' if row['is_reference'] else ''
        print(f"  {row['pile']}{marker} [{row['source']}, {row['operator']}]: "
              f"{row['ratio_mean']:.2f} +- {row['ratio_std']:.2f} (n={row['n']})")
    return 0


def cmd_classify(args, config: PipelineConfig) -> int:
    """Label every bucket smaller, indistinguishable or larger than the reference."""
    features = load_feature_report(args.features)
    ref = resolve_reference(features, config, args)
    level = float(args.level)
    rows = [
        {'trial_id': f.trial_id, 'pile': f.pile_label, 'operator': f.operator, 'source': f.source,
         'zeta': f.value, 'class': classify(f, ref, level)}
        for f in features if f.kind == 'zeta' and f.source == ref.source
    ]
    rows.sort(key=lambda r: r['trial_id'])
    document = {
        'schema_version': SCHEMA_VERSION,
        'reference': ref.to_dict(),
        'level': level,
        'rows': rows,
        'provenance': provenance(config, {os.path.basename(args.features): file_digest(args.features)}),
    }
    write_json(document, os.path.join(args.out or config.output_dir, 'classes.json'))
    counts = pd.DataFrame(rows).groupby(['pile', 'class']).size() if rows else {}
    for (pile, label), count in dict(counts).items():
        print(f"  {pile}: {label} x {count}")
    return 0


def cmd_report(args, config: PipelineConfig) -> int:
    """Run features and estimate on a manifest directory in one go."""
    args.scalograms = False
    status = cmd_features(args, config)
    if status not in (0, 2):
        return status
    out_dir = args.out or config.output_dir
    features_path = os.path.join(out_dir, 'features.json')
    features = load_feature_report(features_path)
    if not features:
        raise InsufficientDataError("No features were extracted")

    logger.info("Step 3: Estimating relative mean sizes...")
    report, rows = _estimate_document(features, config, args,
                                      {'features.json': file_digest(features_path)})
    write_json(report, os.path.join(out_dir, 'estimate.json'))
    write_plot_data(rows, features, out_dir)
    return status


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='TOML configuration file (optional if DIG2SIZE_CONFIG is set in .env)')
    common.add_argument('--seed', type=int, help='Campaign seed for simulate')
    common.add_argument('--out', help='Output directory (default: [output] dir of the configuration)')
    common.add_argument('--source', help="Feature source: bucket, boom, lift, a comma list or 'all'; "
                                         "reference commands also accept an epoch such as bucket:imu2")
    common.add_argument('-t', '--threads', type=int,
                        help=f"Number of threads for concurrent processing (default: {default_threads()})")
    common.add_argument('-v', '--verbose', action='store_true', help='Enable debug logging')

    reference = argparse.ArgumentParser(add_help=False)
    reference.add_argument('--pile', help='Reference pile label (default: [reference] pile)')
    reference.add_argument('--operator', help='Restrict the reference to one operator')
    reference.add_argument('--xbar', type=float, help='Known mean size of the reference pile in mm')
    reference.add_argument('--calibration', help='Use a saved calibration.json instead of recomputing')

    parser = CommandLineParser(description='Estimate relative rock-pile mean size from excavation telemetry.')
    sub = parser.add_subparsers(dest='command', parser_class=CommandLineParser)

    p = sub.add_parser('simulate', parents=[common], help='Generate a simulated campaign')
    p.add_argument('--preset', help='Campaign or pile preset (default: [campaign] preset)')
    p.add_argument('--trials', type=int, help='Trials per pile')
    p.add_argument('--list-presets', action='store_true', help='List available pile presets')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('features', parents=[common], help='Extract beta and zeta from trial manifests')
    p.add_argument('manifest_dir', help='Directory of trial manifests')
    p.add_argument('--scalograms', action='store_true', help='Also export scalogram CSV and PNG files')
    p.set_defaults(func=cmd_features)

    p = sub.add_parser('dig-stats', parents=[common], help='Dig time and entry conditions per operator')
    p.add_argument('manifest_dir', help='Directory of trial manifests')
    p.set_defaults(func=cmd_dig_stats)

    p = sub.add_parser('fit-rr', parents=[common], help='Fit a Rosin-Rammler model to a sieve table')
    p.add_argument('sieve_csv', help='CSV with sieve_mm,passing_pct columns')
    p.add_argument('--pile', help='Pile label (default: derived from the file name)')
    p.add_argument('--p-lo', type=float, default=0.15, help='Lowest passing fraction used (default: 0.15)')
    p.add_argument('--p-hi-min', type=float, default=0.90, help='Closing passing range, lower end (default: 0.90)')
    p.add_argument('--p-hi-max', type=float, default=0.96, help='Closing passing range, upper end (default: 0.96)')
    p.add_argument('--refine', action='store_true', help='Refine with nonlinear least squares')
    p.set_defaults(func=cmd_fit_rr)

    p = sub.add_parser('calibrate', parents=[common, reference], help='Calibrate the reference pile')
    p.add_argument('features', help='features.json from the features command')
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser('estimate', parents=[common, reference], help='Relative mean sizes against the reference')
    p.add_argument('features', nargs='?', help='features.json from the features command')
    p.add_argument('--truth', help='Ground-truth sidecar for classification accuracy')
    p.add_argument('--sieve-dir', help='Estimate from sieve tables instead of features')
    p.add_argument('--refine', action='store_true', help='Refine sieve fits with nonlinear least squares')
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser('classify', parents=[common, reference], help='Classify buckets against the reference')
    p.add_argument('features', help='features.json from the features command')
    p.add_argument('--level', choices=['0.90', '0.95', '0.99'], default='0.90', help='Probability bound (default: 0.90)')
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser('report', parents=[common, reference], help='Features and estimate in one run')
    p.add_argument('manifest_dir', help='Directory of trial manifests')
    p.add_argument('--truth', help='Ground-truth sidecar for classification accuracy')
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main function to dispatch the Dig2Size commands."""
    # Load environment variables
    load_dotenv(override=True)

    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 1

    # Set up logging level based on verbose flag
    log_level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(
        level=log_level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        force=True  # Override any existing configuration
    )
    logging.getLogger('PIL').setLevel(logging.WARNING)

    if args.verbose:
        logger.info("Debug logging enabled")

    try:
        config = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides['campaign.seed'] = args.seed
        if args.threads is not None:
            overrides['threads'] = args.threads
        config = config.with_overrides(overrides)
        return args.func(args, config)
    except Dig2SizeError as e:
        logger.error(f"{type(e).__name__}: {str(e)}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Internal error: {str(e)}")
        logger.debug("Traceback:", exc_info=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
