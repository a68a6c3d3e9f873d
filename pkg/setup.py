from setuptools import setup, find_packages

setup(
    name="irl_forge",
    version="0.1.0",
    description="Revealed preference, Bayesian revealed preference, inverse filtering and passive Langevin IRL",
    long_description=open("README.md", encoding="utf-8").read(),
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    license="MIT",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.9',
    install_requires=[
        "numpy",
        "scipy",
        "pandas>=1.5",
        "matplotlib",
        "tqdm",
        "scikit-learn>=1.2",
        "tomli; python_version < '3.11'",
         ],
    extras_require={"test": ["pytest"], "docs": ["sphinx", "sphinx-rtd-theme"]},
    entry_points={"console_scripts": ["irl-forge=irl_forge.cli:main"]},
)
