import os

from setuptools import setup, find_packages


PROJECT_DIR = os.path.dirname(os.path.abspath(__file__))


def read(fname):
    with open(os.path.join(PROJECT_DIR, fname)) as fp:
        return fp.read()


def requirements(fname):
    return [
        line.strip()
        for line in read(fname).splitlines()
        if line.strip() and not line.startswith("#")
    ]


REQUIREMENTS = requirements("requirements.txt")
REQUIREMENTS_TESTS = requirements("requirements-test.txt")
REQUIREMENTS_TOX = requirements("requirements-tox.txt")


setup(
    name="markov-structures",
    version="0.1.0",
    description="Markov structures with prescribed marginals and systemic"
    " instability measures",
    long_description=read("README.md"),
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=("test*",)),
    package_data={"markov_structures": ["scenarios/*.toml"]},
    include_package_data=True,
    install_requires=REQUIREMENTS,
    extras_require={"test": REQUIREMENTS_TESTS, "tox": REQUIREMENTS_TOX},
    python_requires=">=3.9",
    entry_points={
        "console_scripts": ["markov-structures = markov_structures.cli:main"]
    },
    license="MIT",
    zip_safe=False,
    keywords=(
        "markov chain copula credit risk systemic risk contagion "
        "kullback-leibler marshmallow"
    ),
    classifiers=[
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Natural Language :: English",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
)
