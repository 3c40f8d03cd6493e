#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""diffseg: few-step conditional diffusion segmentation
Conditional denoising diffusion for binary and multi-class segmentation
masks, trained with an adversarial discriminator whose feature maps
re-weight the denoising loss.
"""

from setuptools import setup, find_packages
from codecs import open
from os import path

here = path.abspath(path.dirname(__file__))

# Get the long description from the README file
with open(path.join(here, 'README.rst'), encoding='utf-8') as f:
    long_description = f.read()

about = {}
with open(path.join(here, 'diffseg', '__init__.py'), encoding='utf-8') as f:
    for line in f:
        if line.startswith('__version__'):
            exec(line, about)

setup(
    name='diffseg',
    version=about['__version__'],
    description='Few-step conditional diffusion segmentation',
    long_description=long_description,
    author='The diffseg Authors',
    author_email='',
    license='Apache-2.0',
    classifiers=[
        'License :: OSI Approved :: Apache Software License',
        'Development Status :: 3 - Alpha',

        'Operating System :: OS Independent',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'Topic :: Scientific/Engineering :: Image Recognition',
        'Topic :: Scientific/Engineering :: Medical Science Apps.',

        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
    ],
    platforms=['any'],
    keywords='diffusion segmentation gan attention pytorch',
    packages=find_packages(exclude=['contrib', 'docs', 'tests', 'demo', 'demos', 'examples']),
    python_requires='>=3.8',
    install_requires=[
        'numpy>=1.21.2', 'pandas>=1.3.2',
        'torch>=1.12', 'Pillow>=9.0', 'PyYAML>=5.4',
    ],
    extras_require={
        'tests': ['pytest>=7.0'],
    },
    entry_points={
        'console_scripts': [
            'diffseg=diffseg.cli:main',
        ],
    },

    include_package_data=True,
)
