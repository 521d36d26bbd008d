# ****************
# MODULE IMPORTS
# ****************
import csv
import hashlib
import json
import logging
import multiprocessing
import os

import numpy as np

__all__ = ['set_verbosity', 'worker_count', 'format_value', 'write_csv',
           'write_json', 'canonical_json', 'digest']

THREADS_ENV = 'NI_GRID_THREADS'

# ****************
# FUNCTIONS
# ****************


def set_verbosity(verbose):
    '''
    Configure the root logger from a verbose mode string.

        Parameters:
            verbose: one of 'off', 'info', 'pedantic'
    '''
    if verbose == 'off':
        logging.basicConfig(format='%(message)s', level=logging.CRITICAL)
    elif verbose == 'info':
        logging.basicConfig(format='%(message)s', level=logging.INFO)
    elif verbose == 'pedantic':
        logging.basicConfig(format='%(levelname)s:\t%(message)s', level=logging.DEBUG)
    else:
        raise ValueError(f'Unknown verbose mode: {verbose}')


def worker_count(requested=None):
    '''
    Number of worker processes, capped by the NI_GRID_THREADS variable.

        Parameters:
            requested: optional explicit worker count
        Returns:
            n: positive integer
    '''
    n = requested if requested is not None else multiprocessing.cpu_count()
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            cap = int(cap)
        except ValueError:
            raise ValueError(f'{THREADS_ENV} must be a positive integer, got {cap!r}')
        if cap < 1:
            raise ValueError(f'{THREADS_ENV} must be a positive integer, got {cap}')
        n = min(n, cap)
    return max(1, int(n))


def format_value(value):
    # 17 significant digits round-trips a double exactly
    return '%.17g' % value


def write_csv(header, rows, ofile):
    '''
    Write a header row and numeric data rows to a csv file.

        Parameters:
            header: list of column names
            rows: iterable of numeric rows (2D array or list of lists)
            ofile: output path
    '''
    with open(ofile, 'w', encoding='UTF8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else format_value(v) for v in row])


def _to_builtin(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f'Object of type {type(obj).__name__} is not JSON serializable')


def write_json(dict, ofile):
    '''
    Write json file directly from dictionary.

        Parameters:
            dict: dictionary to save
            ofile: output path
    '''
    json_str = json.dumps(dict, indent=4, default=_to_builtin)
    with open(ofile, 'w') as outfile:
        outfile.write(json_str)
        outfile.write('\n')


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(',', ':'), default=_to_builtin)


def digest(obj):
    '''
    sha256 hex digest of the canonical json encoding of obj.
    '''
    return hashlib.sha256(canonical_json(obj).encode('utf-8')).hexdigest()
