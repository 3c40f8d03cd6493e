#!/usr/bin/env python

__version__ = '0.1.0'
__author__ = 'The diffseg Authors'

import os
import sys

if sys.version_info < (3, 8):
    raise SystemError("diffseg requires Python version >= 3.8")

path = {
    "library": os.path.dirname(os.path.realpath(__file__)),
    "caller": os.path.dirname(os.path.realpath(sys.argv[0]))
}

__all__ = [
    'attention',
    'checkpoint',
    'cli',
    'config',
    'data',
    'diffusion',
    'enums',
    'exceptions',
    'metrics',
    'models',
    'networks',
    'sampler',
    'trainer',
    'utils',
    'path'
]
