from setuptools import setup, find_packages

setup(
    name="bpire-lab",
    version="0.1.0",
    description="Simulation and recurrence classification of branching processes with random "
                "immigration in random environment and excited random walks.",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    py_modules=["main"],
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.10',
    install_requires=[
        "pydantic>=2.11.3",
        "pydantic-settings>=2.0.0",
        "python-dotenv>=1.1.0",
        "langgraph>=0.3.31",
        "numpy>=2.2.4",
        "scipy>=1.13.0",
        "pandas>=2.2.3",
        "PyYAML>=6.0.2",
        "typing_extensions>=4.13.2",
    ],
    extras_require={
        "tracing": ["langsmith>=0.3.32"],
        "dev": ["pytest>=7.0.0", "hypothesis>=6.100.0"],
    },
    entry_points={
        "console_scripts": ["bpire-lab=main:main"],
    },
)
