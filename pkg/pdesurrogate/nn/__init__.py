__license__ = 'MIT'

__all__ = [
    'checkpoint',
    'layers',
    'network',
]
