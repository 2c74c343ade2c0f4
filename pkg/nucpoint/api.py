'''
File: api.py
Project: nucpoint
File Created: Saturday, 7th March 2026 11:02:36 am
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Saturday, 17th October 2026 11:42:08 am
Modified By: koko (koko231125@gmail.com>)
'''


import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable

import nucpoint
import nucpoint.utils as utils
from nucpoint.checkpoint import load_checkpoint, save_checkpoint
from nucpoint.classifier import (
    LinearHead, PredictionSet, evaluate_pipeline, linear_probe, predict, train_classifier,
)
from nucpoint.config import RunConfig
from nucpoint.detector import DetectorModel, detection_report, train_detector
from nucpoint.encoder import ConvEncoder, pretrain_encoder
from nucpoint.errors import ConfigError, MissingInputError
from nucpoint.evalkit import CurvePoint, MatchReport, convergence_epochs, dataset_report
from nucpoint.factory import ModelFactory
from nucpoint.joint import JointHistory, joint_report, train_joint
from nucpoint.rtypes import Command, EncoderKind, Supervision, TrainMode
from nucpoint.synthdata import DataSplit, generate_dataset, load_dataset


logger = logging.getLogger(__name__)

RUN_MANIFEST = 'run_manifest.json'


"""Shared Steps
"""


def load_split(config: RunConfig, path: str | None = None) -> DataSplit:
    """The dataset at `path` (default `config.data_path`), or synthetic data generated from
    `config.synth` with the run seed when no path is set.
    """
    path = config.data_path if path is None else path
    if path:
        return DataSplit.from_manifest(load_dataset(path))
    synth = config.synth
    return DataSplit.generate(synth.scene_spec(), config.seed, synth.n_train, synth.n_test)


def obtain_encoder(config: RunConfig, data: DataSplit, factory: ModelFactory | None = None) -> ConvEncoder:
    """Load `encoder.checkpoint`, or build an encoder of kind `encoder.kind`, pretraining it
    when the kind is pretext-pretrained.
    """
    factory = factory if factory is not None else ModelFactory()
    if config.encoder.checkpoint:
        return load_checkpoint(config.encoder.checkpoint, factory)
    if config.encoder.kind == EncoderKind.PRETEXT_PRETRAINED:
        return pretrain_encoder(data.train, config.encoder, data.num_classes, config.seed)
    return factory.create_encoder(config.encoder, config.seed)


def obtain_detector(config: RunConfig, data: DataSplit, out: Path | None = None) -> DetectorModel:
    """Load `detector.checkpoint`, or train a detector on `data`."""
    if config.detector.checkpoint:
        return load_checkpoint(config.detector.checkpoint)
    metrics = out / 'detector_metrics.csv' if out is not None else None
    model, _ = train_detector([data], config.detector, config.eval.radius, config.seed, metrics)
    return model


def require_test_split(data: DataSplit) -> None:
    if not data.test:
        raise ConfigError('synth.n_test', f"{data.name} has no held-out images")


def probe_hook(config: RunConfig, data: DataSplit) -> Callable[[ConvEncoder], float]:
    require_test_split(data)

    def hook(encoder: ConvEncoder) -> float:
        return linear_probe(encoder, data.train, data.test, data.num_classes, config.classifier,
                            config.eval.radius, config.seed)
    return hook


def write_curve(path: Path, name: str, curve: list[CurvePoint]) -> None:
    utils.write_csv(path, ['epoch', name], [[point.epoch, point.value] for point in curve])


def map_seeds(worker: Callable[[RunConfig, Path], dict[str, object]], config: RunConfig, out: Path) -> list[dict]:
    """Run `worker` once per ablation seed, in processes when `ablate.workers > 1`. Results keep
    the seed order.
    """
    configs = [config.updated(seed=seed) for seed in config.ablate.seeds]
    outs = [out / f'seed_{seed}' for seed in config.ablate.seeds]
    if config.ablate.workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=config.ablate.workers) as pool:
            return list(pool.map(worker, configs, outs))
    return [worker(c, o) for c, o in zip(configs, outs)]


"""Runners
"""


def run_gen_data(config: RunConfig, out: Path) -> dict[str, object]:
    synth = config.synth
    manifest = generate_dataset(out, synth.scene_spec(), config.seed, synth.n_train, synth.n_test)
    return {'images': len(manifest.entries), 'nuclei': manifest.n_nuclei}


def run_train_det(config: RunConfig, out: Path) -> dict[str, object]:
    datasets = [load_split(config)] + [load_split(config, path) for path in config.joint_paths]
    model, history = train_detector(datasets, config.detector, config.eval.radius, config.seed, out / 'metrics.csv')
    save_checkpoint(model, out / 'detector.npz')
    report = detection_report(model, datasets[0].validation, config.eval.radius,
                              config.detector.tau, config.detector.suppress_radius)
    report.write(out / 'report.csv', out / 'report.json')
    return {'detection_f1': report.detection_f1, 'final_loss': history.losses[-1]}


def run_pretrain_enc(config: RunConfig, out: Path) -> dict[str, object]:
    data = load_split(config)
    encoder = pretrain_encoder(data.train, config.encoder, data.num_classes, config.seed)
    save_checkpoint(encoder, out / 'encoder.npz')
    return {'encoder': repr(encoder)}


def run_train_cls(config: RunConfig, out: Path) -> dict[str, object]:
    data = load_split(config)
    encoder = obtain_encoder(config, data)
    detector = None
    if config.classifier.supervision == Supervision.DETECTOR or config.detector.checkpoint:
        detector = obtain_detector(config, data, out)
    head, trained, history = train_classifier(
        encoder, data, config.classifier, config.eval.radius, config.seed,
        detector, config.detector.tau, out / 'metrics.csv',
    )
    save_checkpoint(head, out / 'head.npz')
    save_checkpoint(trained, out / 'encoder.npz')
    summary: dict[str, object] = {'average_f1_gt_points': history.average_f1[-1].value}
    if detector is not None:
        report, _ = evaluate_pipeline(data.validation, detector, trained, head, config.eval.radius,
                                      config.detector.tau, config.detector.suppress_radius)
        report.write(out / 'report.csv', out / 'report.json')
        summary['average_f1'] = report.average_f1
    return summary


def run_train_joint(config: RunConfig, out: Path) -> dict[str, object]:
    data = load_split(config)
    init = None
    if config.joint.init == 'pretext':
        init = obtain_encoder(config.updated(**{'encoder.kind': EncoderKind.PRETEXT_PRETRAINED.value}), data)
    hook = probe_hook(config, data) if config.joint.probe_curve else None
    model, history = train_joint(data, config.joint, config.detector, config.encoder, config.eval.radius,
                                 config.seed, init, hook, out / 'metrics.csv')
    save_checkpoint(model, out / 'joint.npz')
    if hook is not None:
        write_curve(out / 'probe.csv', 'probe_f1', history.probe_f1)
    report = joint_report(model, data.validation, config.eval.radius, config.detector.tau)
    report.write(out / 'report.csv', out / 'report.json')
    return {'average_f1': report.average_f1, 'detection_f1': report.detection_f1}


def run_probe(config: RunConfig, out: Path) -> dict[str, object]:
    data = load_split(config)
    require_test_split(data)
    encoder = obtain_encoder(config, data)
    score = linear_probe(encoder, data.train, data.test, data.num_classes, config.classifier,
                         config.eval.radius, config.seed)
    utils.write_csv(out / 'probe.csv', ['encoder', 'probe_f1'], [[encoder.kind.value, score]])
    return {'probe_f1': score}


def _trained_pipeline(config: RunConfig) -> tuple[DetectorModel, ConvEncoder, LinearHead]:
    missing = [key for key in ('detector', 'encoder', 'classifier') if not getattr(config, key).checkpoint]
    if missing:
        raise ConfigError(f'{missing[0]}.checkpoint', "a trained checkpoint is required")
    factory = ModelFactory()
    return (
        load_checkpoint(config.detector.checkpoint, factory),
        load_checkpoint(config.encoder.checkpoint, factory),
        load_checkpoint(config.classifier.checkpoint, factory),
    )


def run_predict(config: RunConfig, out: Path) -> dict[str, object]:
    data = load_split(config)
    detector, encoder, head = _trained_pipeline(config)
    count = 0
    for sample in data.validation:
        pred = predict(sample.image, detector, encoder, head, config.detector.tau, config.detector.suppress_radius)
        pred.write(out / 'predictions' / f'{sample.name}.csv')
        count += len(pred)
    return {'images': len(data.validation), 'nuclei': count}


def run_eval(config: RunConfig, out: Path) -> dict[str, object]:
    data = load_split(config)
    num_classes = data.num_classes
    if config.eval.predictions:
        # Score prediction files written by `predict` or an external tool
        preds = []
        for sample in data.validation:
            path = Path(config.eval.predictions) / f'{sample.name}.csv'
            if not path.is_file():
                raise MissingInputError(f"no predictions for {sample.name} at {path}")
            preds.append(PredictionSet.read(path))
        report = dataset_report(zip(preds, data.validation), config.eval.radius, num_classes)
    else:
        detector, encoder, head = _trained_pipeline(config)
        report, _ = evaluate_pipeline(data.validation, detector, encoder, head, config.eval.radius,
                                      config.detector.tau, config.detector.suppress_radius)
    report.write(out / 'report.csv', out / 'report.json')
    return {'average_f1': report.average_f1, 'detection_f1': report.detection_f1}


"""Ablation Runners
"""


def capacity_worker(config: RunConfig, out: Path) -> dict[str, object]:
    data = load_split(config)
    scores = {}
    for width in config.ablate.widths:
        cfg = config.updated(**{'detector.width': width})
        model, _ = train_detector([data], cfg.detector, cfg.eval.radius, cfg.seed, out / f'width_{width}.csv')
        scores[width] = detection_report(model, data.validation, cfg.eval.radius, cfg.detector.tau).detection_f1
    return {'seed': config.seed, 'scores': scores}


def run_ablate_capacity(config: RunConfig, out: Path) -> dict[str, object]:
    results = map_seeds(capacity_worker, config, out)
    rows, medians = [], {}
    for width in config.ablate.widths:
        values = [r['scores'][width] for r in results]
        medians[width] = utils.median(values)
        rows.append([width, *values, medians[width]])
    header = ['width'] + [f'seed_{s}' for s in config.ablate.seeds] + ['median_detection_f1']
    utils.write_csv(out / 'summary.csv', header, rows)
    return {'gap': max(medians.values()) - min(medians.values())}


def datasets_worker(config: RunConfig, out: Path) -> dict[str, object]:
    synth = config.synth
    small = DataSplit.generate(synth.scene_spec(style=synth.style), config.seed,
                               config.ablate.small_images, synth.n_test, 'small')
    large = DataSplit.generate(synth.scene_spec(style=synth.style + 1), utils.derive_seed(config.seed, 1),
                               synth.n_train, 0, 'large')
    scores = {}
    for setting, datasets in (('separated', [small]), ('joint', [small, large])):
        model, _ = train_detector(datasets, config.detector, config.eval.radius, config.seed, out / f'{setting}.csv')
        scores[setting] = detection_report(model, small.validation, config.eval.radius,
                                           config.detector.tau).detection_f1
    return {'seed': config.seed, 'scores': scores}


def run_ablate_datasets(config: RunConfig, out: Path) -> dict[str, object]:
    results = map_seeds(datasets_worker, config, out)
    rows, medians = [], {}
    for setting in ('separated', 'joint'):
        values = [r['scores'][setting] for r in results]
        medians[setting] = utils.median(values)
        rows.append([setting, *values, medians[setting]])
    header = ['setting'] + [f'seed_{s}' for s in config.ablate.seeds] + ['median_detection_f1']
    utils.write_csv(out / 'summary.csv', header, rows)
    return {'joint_minus_separated': medians['joint'] - medians['separated']}


def _report_row(report: MatchReport) -> list[float]:
    return [*map(float, report.per_class_f1), report.average_f1, report.detection_f1]


def strategy_worker(config: RunConfig, out: Path) -> dict[str, object]:
    data = load_split(config)
    radius, tau = config.eval.radius, config.detector.tau
    detector = obtain_detector(config, data, out)
    encoder = obtain_encoder(config.updated(**{'encoder.kind': EncoderKind.PRETEXT_PRETRAINED.value}), data)

    rows = {}
    for mode in (TrainMode.LINEAR, TrainMode.FULL):
        cfg = config.updated(**{'classifier.mode': mode.value})
        head, trained, _ = train_classifier(encoder, data, cfg.classifier, radius, cfg.seed,
                                            detector, tau, out / f'{mode.value}.csv')
        report, _ = evaluate_pipeline(data.validation, detector, trained, head, radius, tau)
        rows[mode.value] = _report_row(report)

    model, _ = train_joint(data, config.joint, config.detector, config.encoder, radius, config.seed,
                           encoder, None,
                           out / f'{TrainMode.END_TO_END.value}.csv')
    rows[TrainMode.END_TO_END.value] = _report_row(joint_report(model, data.validation, radius, tau))
    return {'seed': config.seed, 'rows': rows, 'num_classes': data.num_classes}


def run_ablate_strategy(config: RunConfig, out: Path) -> dict[str, object]:
    results = map_seeds(strategy_worker, config, out)
    num_classes = results[0]['num_classes']
    header = ['strategy'] + [f'class_{c}_f1' for c in range(1, num_classes + 1)] + ['average_f1', 'detection_f1']
    rows, per_seed = [], []
    for strategy in (TrainMode.LINEAR.value, TrainMode.FULL.value, TrainMode.END_TO_END.value):
        columns = list(zip(*[r['rows'][strategy] for r in results]))
        rows.append([strategy, *[utils.median(col) for col in columns]])
        per_seed.extend([strategy, r['seed'], *r['rows'][strategy]] for r in results)
    utils.write_csv(out / 'summary.csv', header, rows)
    utils.write_csv(out / 'per_seed.csv', header[:1] + ['seed'] + header[1:], per_seed)
    average = {row[0]: row[-2] for row in rows}
    return {'linear_minus_end_to_end': average['linear'] - average['end_to_end']}


def dynamics_worker(config: RunConfig, out: Path) -> dict[str, object]:
    data = load_split(config)
    init = None
    if config.joint.init == 'pretext':
        init = obtain_encoder(config.updated(**{'encoder.kind': EncoderKind.PRETEXT_PRETRAINED.value}), data)
    hook = probe_hook(config, data) if config.joint.probe_curve else None
    _, history = train_joint(data, config.joint, config.detector, config.encoder, config.eval.radius,
                             config.seed, init, hook, out / 'metrics.csv')
    if hook is not None:
        write_curve(out / 'probe.csv', 'probe_f1', history.probe_f1)
    return {'seed': config.seed, **convergence_summary(history, config.eval.fraction)}


def convergence_summary(history: JointHistory, fraction: float) -> dict[str, float]:
    det = convergence_epochs(history.detection_f1, fraction)
    cls = convergence_epochs(history.average_f1, fraction)
    return {'detection_epochs': det, 'classification_epochs': cls, 'ratio': cls / det}


def run_dynamics(config: RunConfig, out: Path) -> dict[str, object]:
    results = map_seeds(dynamics_worker, config, out)
    keys = ['detection_epochs', 'classification_epochs', 'ratio']
    rows = [[r['seed'], *[r[k] for k in keys]] for r in results]
    medians = {k: utils.median([r[k] for r in results]) for k in keys}
    rows.append(['median', *[medians[k] for k in keys]])
    utils.write_csv(out / 'summary.csv', ['seed', *keys], rows)
    return {'median_ratio': medians['ratio']}


RUNNERS: dict[Command, Callable[[RunConfig, Path], dict[str, object]]] = {
    Command.GEN_DATA: run_gen_data,
    Command.TRAIN_DET: run_train_det,
    Command.TRAIN_CLS: run_train_cls,
    Command.TRAIN_JOINT: run_train_joint,
    Command.PRETRAIN_ENC: run_pretrain_enc,
    Command.PROBE: run_probe,
    Command.EVAL: run_eval,
    Command.PREDICT: run_predict,
    Command.ABLATE_CAPACITY: run_ablate_capacity,
    Command.ABLATE_DATASETS: run_ablate_datasets,
    Command.ABLATE_STRATEGY: run_ablate_strategy,
    Command.DYNAMICS: run_dynamics,
}


"""Dispatcher
"""


def input_paths(config: RunConfig) -> list[str]:
    paths = [config.data_path, *config.joint_paths, config.detector.checkpoint,
             config.encoder.checkpoint, config.classifier.checkpoint, config.eval.predictions]
    return [p for p in paths if p]


def check_output(config: RunConfig) -> Path:
    r"""Resolve the output directory and refuse one that a run may not replace.

    The output may not be, contain or lie inside any input, nor hold the working directory. An
    existing directory is only replaced when it is empty or carries the manifest of an earlier run.

    Raises:
        ConfigError:
            If the output is refused.
    """
    out = Path(config.output).resolve()
    cwd = Path.cwd().resolve()
    if out == cwd or out in cwd.parents:
        raise ConfigError('output', f"{config.output} holds the working directory")
    for path in input_paths(config):
        source = Path(path).resolve()
        if out == source or out in source.parents or source in out.parents:
            raise ConfigError('output', f"{config.output} overlaps the input {path}")
    if out.exists():
        if not out.is_dir():
            raise ConfigError('output', f"{config.output} is not a directory")
        if any(out.iterdir()) and not (out / RUN_MANIFEST).is_file():
            raise ConfigError('output', f"{config.output} is not empty and holds no {RUN_MANIFEST}")
    return out


def run(command: Command | str, config: RunConfig) -> Path:
    """Run one command into `config.output`.

    The runner works in a staging directory next to the output that replaces the output only
    when the runner succeeds, together with a run manifest that is enough to replay the run.

    Args:
        command (Command | str):
            The command, e.g. `Command.TRAIN_DET` or 'train-det'.
        config (RunConfig):
            A validated configuration.

    Returns:
        Path:
            The output directory.

    Raises:
        NucPointError:
            Whatever the runner raises; nothing is left behind in that case.
    """
    command = Command(command)
    config.validate()
    for path in input_paths(config):
        if not Path(path).exists():
            raise MissingInputError(f"input {path} does not exist")

    out = check_output(config)
    staging = out.parent / f'.{out.name}.staging'
    # Remove leftovers of an interrupted run
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)

    try:
        logger.info("running %s into %s", command.value, out)
        summary = RUNNERS[command](config, staging)
        manifest = {
            'command': command.value,
            'version': nucpoint.__version__,
            'seed': config.seed,
            'config': config.to_dict(),
            'input_hash': utils.hash_paths(input_paths(config)),
            'summary': summary,
        }
        (staging / RUN_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + '\n')
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise

    if out.exists():
        shutil.rmtree(out)
    staging.rename(out)
    logger.info("%s finished: %s", command.value, summary)
    return out
