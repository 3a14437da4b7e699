#!/usr/bin/env python
from setuptools import setup, find_packages


try:
    with open('VERSION.txt', 'r') as v:
        version = v.read().strip()
except FileNotFoundError:
    version = '0.0.0.dev0'

with open('DESCRIPTION', 'r') as d:
    long_description = d.read()

setup(
    name='hjbnet',
    description='Distributed HJB value approximation for multi-agent systems',
    long_description=long_description,
    version=version,
    packages=find_packages(exclude=['tests']),
    package_data={'hjbnet': ['scenarios/*.json']},
    install_requires=[
        'numpy>=1.22',
        'scipy>=1.10',
        'networkx>=2.6',
    ],
    entry_points={
        'console_scripts': ['hjbnet=hjbnet.cli:main'],
    },
    license='Apache 2.0',
    classifiers=[
        'Development Status :: 4 - Beta',
        'Framework :: AsyncIO',
        'Intended Audience :: Science/Research',
        'Natural Language :: English',
        'License :: OSI Approved :: Apache Software License',
        'Topic :: Scientific/Engineering :: Mathematics',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3 :: Only',
    ],
)
