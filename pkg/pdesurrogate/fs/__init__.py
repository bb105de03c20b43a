__license__ = 'MIT'

__all__ = [
    'binary',
    'formatters',
    'readers',
    'savers',
]
