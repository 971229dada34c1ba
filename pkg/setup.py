from setuptools import setup, find_packages

setup(
    name="dsc-precoder",
    version="0.1.0",
    packages=find_packages(include=["src", "src.*"]),
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
        "pydantic>=2.0.0",
        "PyYAML>=6.0",
    ],
    extras_require={
        "dev": [
            "pytest>=7.3.1",
            "black>=23.3.0",
            "flake8>=6.0.0",
            "mypy>=1.3.0",
            "isort>=5.12.0",
        ]
    },
    entry_points={"console_scripts": ["dsc-precoder=src.cli:main"]},
    python_requires=">=3.10",
    description="Limited-feedback FDD massive-MIMO precoding simulator with distributed source coding networks",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    author="Manav Gupta",
    author_email="manavg@gmail.com",
    license="MIT",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
)
