from setuptools import setup, find_packages


def _requirements():
    with open('requirements.txt') as f:
        return [line.strip() for line in f if line.strip() and not line.startswith('#')
                and not line.startswith('pytest')]


setup(
    name='avalanche',
    version='0.1.0',
    packages=find_packages(include=['avalanche', 'avalanche.*']),
    python_requires='>=3.9',
    install_requires=_requirements(),
    extras_require={'test': ['pytest>=7.4.0']},
    entry_points={'console_scripts': ['avalanche = avalanche.cli:main']},
)
