"""Setup configuration for the adversarial PPM benchmark package."""

from setuptools import setup, find_packages
from pathlib import Path

# Read the README file
this_directory = Path(__file__).parent
long_description = (this_directory / "README.md").read_text(encoding='utf-8')

# Read requirements
requirements = []
if (this_directory / "requirements.txt").exists():
    requirements = (this_directory / "requirements.txt").read_text().strip().split('\n')

setup(
    name="adversarial-ppm-bench",
    version="0.1.0",
    author="Iwan Li",
    author_email="iwan.li@outlook.com",
    description="Adversarial attack benchmark for outcome-oriented predictive process monitoring",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests*"]),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
    python_requires=">=3.10",
    install_requires=requirements,
    include_package_data=True,
    package_data={
        'adversarial_ppm': ['../templates/*.ini'],
    },
    entry_points={
        "console_scripts": [
            "advppm=adversarial_ppm.cli:main",
        ],
    },
    keywords="process mining, predictive process monitoring, adversarial attacks, variational autoencoder",
)
