"""
Setup script for nigrid

You can install nigrid with

python setup.py install
"""

import sys,os
from os.path import join

from setuptools import setup, find_packages

if sys.argv[-1] == 'setup.py':
    print("To install, run 'python setup.py install'")
    print()


def get_version():
    # single source of truth is nigrid/_version.py
    namespace = {}
    with open(join(os.path.dirname(os.path.abspath(__file__)), 'nigrid', '_version.py')) as f:
        exec(f.read(), namespace)
    return namespace['__version__']


descr = """
nigrid simulates networks of nonlinear negative imaginary systems and checks
their stability certificates numerically: dissipation inequalities, a
Lyapunov function for the closed loop, and output consensus. The power grid
layer models swing-equation buses, lossless lines and battery edge
controllers, driven by JSON scenario files from the command line.
"""

setup(
    name                 = 'nigrid',
    version              = get_version(),
    description          = 'Networked negative imaginary systems and power grid stability checks',
    long_description     = descr,
    classifiers=[
            'Development Status :: 3 - Alpha',
            'Environment :: Console',
            'Intended Audience :: Science/Research',
            'Natural Language :: English',
            'Operating System :: MacOS :: MacOS X',
            'Operating System :: POSIX :: Linux',
            'Programming Language :: Python :: 3.8',
            'Topic :: Scientific/Engineering :: Mathematics',
            'Topic :: Scientific/Engineering :: Physics'
    ],
    keywords=[ 'negative imaginary systems', 'power grid', 'lyapunov stability', 'consensus' ],
    license              = 'MIT',
    platforms            = ['Linux-64', 'Mac OSX-64', 'Unix-64'],
    packages             = find_packages(exclude=['examples', 'examples.*'])+['test'],
    include_package_data = True,
    python_requires      = '>=3.8',
    install_requires     = ['numpy', 'scipy', 'networkx'],
    extras_require       = {'test': ['pytest']},

    entry_points         = {'console_scripts':['nigrid=nigrid.cli:startup']},
    zip_safe             = False
)
