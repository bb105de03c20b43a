__license__ = 'MIT'
__version__ = '1.0.0'


__all__ = [
    'cli',
    'config',
    'elliptic',
    'errors',
    'fs',
    'grid',
    'nlse',
    'nn',
    'sampler',
    'theory',
    'train'
]
