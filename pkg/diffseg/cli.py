#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright 2026 The diffseg Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
"""``diffseg`` command line.

    diffseg synth    --out data/synth --set synth.count=64
    diffseg train    --config run.yaml --out runs/a --seed 7 [--no-attention] [--no-latent]
    diffseg predict  --out runs/a --set infer.checkpoint=runs/a/checkpoints/step_005000
    diffseg evaluate --out runs/a --set eval.pred_root=runs/a/predictions
    diffseg ablate   --out runs/ablation --set data.source=synthetic

Exit status: 0 success, 1 runtime failure, 2 configuration error.
"""
import argparse
import logging
import os
import sys
import time
from dataclasses import replace

import pandas as pd

import diffseg
from diffseg import config as conf
from diffseg.checkpoint import Checkpoint, load_checkpoint, check_timesteps
from diffseg.data import (generate_synthetic, load_folder, load_images, export_folder,
                          kfold_split, read_mask, label_to_index)
from diffseg.enums import COMMON_TYPES, Commands, Variants, ExitCodes, AttentionScales
from diffseg.exceptions import ConfigurationError, DataError, DiffsegError
from diffseg.metrics import evaluate_dataset
from diffseg.sampler import predict, save_prediction, derive_seeds
from diffseg.trainer import Trainer
from diffseg.utils.utils import create_logger, makedirs, write_json, sha256_file

# =============================================
# Configure logging
create_logger(__name__, level=os.getenv('LOGLEVEL') or logging.INFO)

log = logging.getLogger(__name__)

FLAG_KEYS = {
    'seed': 'run.seed',
    'use_attention': 'train.use_attention',
    'use_latent': 'train.use_latent',
    'attn_scale': 'train.attn_scale',
    'timesteps': 'diffusion.timesteps',
    'instances': 'infer.instances',
    'threshold': 'infer.threshold',
}


# =============================================
# argument parsing
# =============================================

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML settings file (or a manifest.json to rerun)')
    common.add_argument('--out', default=None, help='output directory (default: ./diffseg-<command>)')
    common.add_argument('--seed', type=int, help='seed for training and inference')
    common.add_argument('--no-attention', dest='use_attention', action='store_const', const=False,
                        help='train without the attention mask (flag)')
    common.add_argument('--no-latent', dest='use_latent', action='store_const', const=False,
                        help='train without the latent vector (flag)')
    common.add_argument('--attn-scale', type=int, choices=AttentionScales.tuple(),
                        help='discriminator tap used for attention')
    common.add_argument('--timesteps', type=int, help='diffusion steps T')
    common.add_argument('--instances', type=int, help='samples averaged per image')
    common.add_argument('--threshold', type=float, help='binary threshold on the mean')
    common.add_argument('--threads', type=int, help='loading / sampling threads')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='override any setting (repeatable)')

    parser = argparse.ArgumentParser(
        prog='diffseg', description='Few-step conditional diffusion segmentation',
        epilog=conf.describe(), formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument('--version', action='version', version='%(prog)s ' + diffseg.__version__)
    commands = parser.add_subparsers(dest='command', metavar='command')
    commands.required = True
    for name, text in ((Commands.SYNTH, 'write a synthetic dataset'),
                       (Commands.TRAIN, 'train generator and discriminator'),
                       (Commands.PREDICT, 'write masks and probability maps'),
                       (Commands.EVALUATE, 'score predictions against ground truth'),
                       (Commands.ABLATE, 'attention scale / attention / latent sweep')):
        commands.add_parser(name, parents=[common], help=text, epilog=conf.describe(),
                            formatter_class=argparse.RawDescriptionHelpFormatter)
    return parser


def settings_from_args(args, environ=None):
    flags = {key: getattr(args, name) for name, key in FLAG_KEYS.items()}
    if args.threads is not None:
        flags['data.threads'] = args.threads
        flags['infer.threads'] = args.threads
    return conf.resolve(args.config, flags=flags, overrides=args.overrides, environ=environ)


# =============================================
# shared steps
# =============================================

def load_dataset(settings):
    source = settings['data.source']
    if source == 'synthetic':
        return generate_synthetic(conf.synthetic_spec(settings), settings['synth.count'])
    if source == 'folder':
        return load_folder(settings['data.root'], resolution=settings['data.resolution'],
                           class_count=settings['data.class_count'],
                           image_channels=settings['data.image_channels'],
                           threads=settings['data.threads'])
    raise ConfigurationError("unknown data source %r (folder or synthetic)" % source, key='data.source')


def split_dataset(settings, dataset):
    """ (train, val); without folds everything trains and nothing validates """
    if settings['data.k_folds'] >= 2:
        return kfold_split(dataset, settings['data.k_folds'], settings['data.fold'], settings['data.split_seed'])
    return dataset, []


def load_model(settings):
    path = settings['infer.checkpoint']
    if not path:
        raise ConfigurationError("no checkpoint given", key='infer.checkpoint')
    try:
        ckpt = load_checkpoint(path, with_discriminator=False)
    except DataError as e:
        raise ConfigurationError(str(e), key='infer.checkpoint')
    if 'diffusion.timesteps' in settings.explicit:
        check_timesteps(ckpt, settings['diffusion.timesteps'])
    return ckpt


def predict_all(ckpt, pairs, settings, out_dir=None):
    """ :Return: {stem: hard mask}; writes PNGs when ``out_dir`` is given """
    icfg = conf.inference_config(settings, timesteps=ckpt.schedule.T)
    gen = ckpt.generator.eval()
    seeds = derive_seeds(icfg.seed, len(pairs))

    masks = {}
    for (stem, image), seed in zip(pairs, seeds):
        mean, hard = predict(image, gen, ckpt.schedule, replace(icfg, seed=seed), threads=settings['infer.threads'])
        masks[stem] = hard
        if out_dir is not None:
            save_prediction(out_dir, stem, mean, hard)
    log.info("predicted %d image(s) with %d instance(s) each", len(pairs), icfg.n_instances)
    return masks


def score(settings, samples, pred_root):
    """ read ``<stem>.pred.png`` (or ``<stem>.png``) for every sample and compare """
    class_count = settings['data.class_count']
    preds, gts, missing = [], [], []
    for s in samples:
        path = os.path.join(pred_root, s.identifier + COMMON_TYPES["PRED_SUFFIX"])
        if not os.path.exists(path):
            path = os.path.join(pred_root, s.identifier + ".png")
        if not os.path.exists(path):
            missing.append(s.identifier)
            continue
        preds.append(read_mask(path, s.resolution, class_count))
        gts.append(label_to_index(s.label))
    if missing:
        raise DataError("%d prediction(s) missing under %s" % (len(missing), pred_root), rejected=missing)
    return evaluate_dataset(preds, gts, pooled=settings['eval.pooled'], num_classes=max(class_count, 1) + 1)


def write_manifest(out, command, settings, started):
    manifest_file = COMMON_TYPES["MANIFEST_FILE"]
    artifacts = {}
    for folder, _, files in os.walk(out):
        for name in files:
            path = os.path.join(folder, name)
            rel = os.path.relpath(path, out)
            if rel != manifest_file and os.path.getmtime(path) >= started - 1:
                artifacts[rel.replace(os.sep, '/')] = sha256_file(path)
    return write_json(os.path.join(out, manifest_file), {
        'command': command,
        'version': diffseg.__version__,
        'seed': settings['run.seed'],
        'config': settings.to_dict(),
        'artifacts': artifacts,
    })


# =============================================
# commands
# =============================================

def run_synth(settings, out):
    samples = generate_synthetic(conf.synthetic_spec(settings), settings['synth.count'])
    export_folder(samples, out)
    return {'samples': len(samples)}


def run_train(settings, out):
    train_set, _ = split_dataset(settings, load_dataset(settings))
    if settings['train.resume']:
        trainer = Trainer.resume(settings['train.resume'], output=out)
    else:
        gen_config = conf.generator_config(settings)
        trainer = Trainer(gen_config, conf.discriminator_config(settings, gen_config),
                          conf.train_config(settings), output=out)

    gen, disc, train_log = trainer.train(train_set, max_steps=settings['train.max_steps'])

    summary = {'steps': int(gen.step), 'samples': len(train_set), 'timesteps': trainer.schedule.T}
    frame = train_log.recorded
    if len(frame):
        tail = frame.tail(100)
        summary.update({
            'final_generator_loss': float(frame['generator_loss'].iloc[-1]),
            'mean_generator_loss_last_100': float(tail['generator_loss'].mean()),
            'mean_disc_accuracy_last_100': float(tail['disc_accuracy'].mean()),
        })
    write_json(os.path.join(out, 'summary.json'), summary)
    log.info("training done: %s", summary)
    return summary


def run_predict(settings, out):
    ckpt = load_model(settings)
    cfg = ckpt.generator.config
    folder = settings['infer.images']
    if not folder:
        if not settings['data.root']:
            raise ConfigurationError("no images to predict", key='infer.images')
        folder = os.path.join(settings['data.root'], COMMON_TYPES["IMAGES_DIR"])
    pairs = load_images(folder, resolution=cfg.input_resolution, image_channels=cfg.image_channels)
    predict_all(ckpt, pairs, settings, out_dir=os.path.join(out, COMMON_TYPES["PREDICTIONS_DIR"]))
    return {'images': len(pairs)}


def run_evaluate(settings, out):
    """ score a checkpoint on the (validation) data, or an existing prediction folder """
    train_set, val_set = split_dataset(settings, load_dataset(settings))
    samples = val_set or train_set
    if not samples:
        raise ConfigurationError("dataset is empty", key='data.root')

    if settings['infer.checkpoint']:
        pred_root = os.path.join(out, COMMON_TYPES["PREDICTIONS_DIR"])
        predict_all(load_model(settings), [(s.identifier, s.image) for s in samples], settings, out_dir=pred_root)
    else:
        pred_root = settings['eval.pred_root']
        if not pred_root or not os.path.isdir(pred_root):
            raise ConfigurationError("no checkpoint and no prediction folder (%s)" % pred_root,
                                     key='eval.pred_root')

    report = score(settings, samples, pred_root)
    fold = settings['data.fold'] if settings['data.k_folds'] >= 2 else None
    report.to_json(os.path.join(out, 'metrics.json'))
    report.to_csv(os.path.join(out, 'metrics.csv'), fold=fold)
    log.info("dice %.2f  mIoU %.2f over %d image(s)", report.dice, report.miou, len(samples))
    return report.to_dict()


def _ablation_data(settings):
    if settings['data.source'] == 'synthetic':
        count, val_count = settings['synth.count'], settings['ablate.val_count']
        samples = generate_synthetic(conf.synthetic_spec(settings), count + val_count)
        return samples[:count], samples[count:]
    if settings['data.k_folds'] < 2:
        raise ConfigurationError("ablation on a folder needs data.k_folds >= 2", key='data.k_folds')
    return split_dataset(settings, load_dataset(settings))


def _ablation_runs(settings):
    base_scale = conf.attention_scale(settings)
    for variant in settings['ablate.variants']:
        if variant not in Variants.tuple():
            raise ConfigurationError("unknown variant %r" % variant, key='ablate.variants')
        scales = settings['ablate.scales'] if variant == Variants.FULL else [base_scale]
        for scale in scales:
            for seed in settings['ablate.seeds']:
                yield variant, scale, seed


def run_ablate(settings, out):
    """ one metrics row per (variant, scale, seed), medians, and a flag when attention does not help """
    train_set, val_set = _ablation_data(settings)
    if not val_set:
        raise ConfigurationError("ablation needs validation samples", key='ablate.val_count')

    rows = []
    for variant, scale, seed in _ablation_runs(settings):
        run = conf.Settings(settings)
        run.set('run.seed', seed)
        run.set('train.attn_scale', scale)
        if variant == Variants.NO_ATTENTION:
            run.set('train.use_attention', False)
        if variant == Variants.NO_LATENT:
            run.set('train.use_latent', False)

        run_dir = os.path.join(out, 'runs', '%s_s%d_seed%d' % (variant, scale, seed))
        gen_config = conf.generator_config(run)
        trainer = Trainer(gen_config, conf.discriminator_config(run, gen_config), conf.train_config(run),
                          output=run_dir)
        trainer.train(train_set)

        ckpt = Checkpoint(generator=trainer.gen, schedule=trainer.schedule)
        masks = predict_all(ckpt, [(s.identifier, s.image) for s in val_set], run)
        report = evaluate_dataset([label_to_index(masks[s.identifier]) for s in val_set],
                                  [label_to_index(s.label) for s in val_set],
                                  pooled=run['eval.pooled'], num_classes=max(run['data.class_count'], 1) + 1)

        row = {'variant': variant, 'attn_scale': scale, 'seed': seed}
        row.update({m: float(v) for m, v in report.mean.items()})
        rows.append(row)
        log.info("ablation %s scale=%d seed=%d: dice %.2f", variant, scale, seed, row['dice'])

    table = pd.DataFrame(rows)
    table.to_csv(os.path.join(out, 'ablation.csv'), index=False)
    medians = table.groupby(['variant', 'attn_scale'])['dice'].median()

    base_scale = conf.attention_scale(settings)
    full = medians.get((Variants.FULL, base_scale))
    no_attention = medians.get((Variants.NO_ATTENTION, base_scale))
    flagged = full is not None and no_attention is not None and full < no_attention
    if flagged:
        log.warning("median dice with attention (%.2f) is below the no-attention variant (%.2f)",
                    full, no_attention)

    summary = {
        'medians': [{'variant': v, 'attn_scale': int(s), 'dice': float(d)} for (v, s), d in medians.items()],
        'full_vs_no_attention_flagged': bool(flagged),
    }
    write_json(os.path.join(out, 'ablation_summary.json'), summary)
    return summary


COMMANDS = {
    Commands.SYNTH: run_synth,
    Commands.TRAIN: run_train,
    Commands.PREDICT: run_predict,
    Commands.EVALUATE: run_evaluate,
    Commands.ABLATE: run_ablate,
}


# =============================================

def main(argv=None):
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        settings = settings_from_args(args)
        out = makedirs(args.out or 'diffseg-%s' % args.command)
        COMMANDS[args.command](settings, out)
        write_manifest(out, args.command, settings, started)
        return ExitCodes.OK

    except ConfigurationError as e:
        log.error("configuration error: %s", e)
        print("diffseg: configuration error: %s" % e, file=sys.stderr)
        return ExitCodes.CONFIG_ERROR

    except DiffsegError as e:
        log.error("%s: %s", type(e).__name__, e)
        print("diffseg: %s" % e, file=sys.stderr)
        return ExitCodes.RUNTIME_ERROR

    except Exception as e:
        log.exception("unexpected failure")
        print("diffseg: %s" % e, file=sys.stderr)
        return ExitCodes.RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
