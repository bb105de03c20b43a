import os
from setuptools import setup, find_packages

here = os.path.abspath(os.path.dirname(__file__))

with open(os.path.join(here, 'requirements.txt')) as req:
    requirements = [line.strip() for line in req if line.strip() and not line.startswith('#')]

setup(
    name='pdesurrogate',
    version='1.0.0',
    description='Periodic CNN surrogates for effective conductance and NLSE ground state energies',
    license='MIT',
    zip_safe=True,
    packages=find_packages(exclude=['tests']),
    install_requires=requirements,
    extras_require={'fast-json': ['ujson']},
    entry_points={'console_scripts': ['pdesurrogate=pdesurrogate.cli:main']},
    python_requires='>=3.7'
)
