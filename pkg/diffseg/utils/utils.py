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
import hashlib
import json
import logging
import os

import numpy as np
import pandas as pd


# ---------------------------------------------

def create_logger(name, level=logging.WARNING):
    """:Return: a logger with the given `name` and optional `level`."""
    logger = logging.getLogger(name)
    logger.setLevel(level)
    # modules call this at import time, tests import them many times
    if not any(getattr(h, '_diffseg', False) for h in logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter('%(asctime)s [%(levelname)s] %(name)s: %(message)s'))
        handler._diffseg = True
        logger.addHandler(handler)
    logger.propagate = False
    return logger


# ---------------------------------------------

def is_number(string):
    """ checks if a string is a number (int/float) """
    string = str(string)
    if string.isnumeric():
        return True
    try:
        float(string)
        return True
    except ValueError:
        return False


# ---------------------------------------------

def to_boolean(s):
    """ parse the usual truthy/falsy spellings, None when unparseable """
    if isinstance(s, bool):
        return s
    if s is None:
        return None
    s = str(s).strip().lower()
    if s in ('true', '1', 't', 'y', 'yes', 'on'):
        return True
    if s in ('false', '0', 'f', 'n', 'no', 'off'):
        return False
    return None


# ---------------------------------------------

def to_int_list(value):
    """ "16, 32,64" / [16, 32, 64] / 16 -> [16, 32, 64] """
    if isinstance(value, str):
        return [int(v) for v in value.replace(' ', '').split(',') if v]
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    return [int(value)]


# ---------------------------------------------

def sha256_file(path, chunk_size=1 << 20):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(chunk_size), b''):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------

def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (pd.Timestamp,)):
        return obj.isoformat()
    if hasattr(obj, '__fspath__'):
        return os.fspath(obj)
    raise TypeError("Object of type %s is not JSON serializable" % type(obj).__name__)


def write_json(path, data):
    """ write `data` as pretty, key-sorted JSON (stable across runs) """
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    return path


def read_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


# ---------------------------------------------

def makedirs(path):
    os.makedirs(path, exist_ok=True)
    return path


# =============================================
# append-only JSON line store
# =============================================

class DataStore():
    """Records one JSON object per line and keeps the rows in memory.

    :Parameters:

        output_file : str
            Path of the ``.jsonl`` file to append to (default: None, memory only)
    """

    def __init__(self, output_file=None, append=False):
        self.output_file = output_file
        self.rows = []
        if output_file is not None and not append and os.path.exists(output_file):
            os.remove(output_file)

    def record(self, *args, **kwargs):
        """ add a row (dict positional and/or keyword fields) """
        data = {}
        if len(args) == 1 and isinstance(args[0], dict):
            data.update(dict(args[0]))
        if kwargs:
            data.update(dict(kwargs))

        self.rows.append(data)

        if self.output_file is not None:
            with open(self.output_file, 'a', encoding='utf-8') as f:
                f.write(json.dumps(data, sort_keys=True, default=_json_default) + "\n")

        return data

    @property
    def recorded(self):
        return pd.DataFrame(self.rows)

    @staticmethod
    def load(path):
        """ read a ``.jsonl`` file back into a DataFrame """
        return pd.read_json(path, lines=True)
