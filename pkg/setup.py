from os import path
from setuptools import setup, find_packages


this_directory = path.abspath(path.dirname(__file__))

with open(path.join(this_directory, 'README.md'), encoding='utf-8') as file:
    long_description = file.read()

setup(
    name="nucpoint",
    version="0.1.0",
    author="koko",
    author_email="koko231125@gmail.com",
    description="Decoupled point detection and classification of cell nuclei.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=['tests', 'examples*']),
    py_modules=['cli'],
    install_requires=[
        "click>=8.0.1", 
        "numpy>=1.24", 
        "scipy>=1.10", 
        "Pillow>=9.5", 
    ],
    extras_require={
        'test': ["pytest>=7.4"], 
    },
    entry_points={
        'console_scripts': [
            'nucpoint = cli:nucpoint_cli', 
        ],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: GNU General Public License v3 (GPLv3)",
        "Operating System :: OS Independent", 
    ],
    python_requires='>=3.11', 
    license="GNU General Public License v3",
    keywords=["nucpoint", "nuclei", "point detection", "classification", "numpy"],
)
