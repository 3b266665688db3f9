from setuptools import setup, find_packages

setup(
    name='relu-compiler',
    version='0.1.0',
    packages=find_packages(exclude=['tests', 'tests.*']),
    install_requires=[
        'numpy>=1.22.0',
        'scipy>=1.8.0',
        'pandas>=1.5.0',
        'matplotlib>=3.5.0',
        'python-dotenv>=1.0.0',
    ],
    extras_require={
        'test': ['pytest>=7.0.0'],
    },
    entry_points={
        'console_scripts': [
            'relu-compiler=relu_compiler.cli:main',
        ],
    },
    author='Quarme Bryte',
    author_email='quarmebrytejnr@gmail.com',
    description='Compile oblique decision trees, forests and Haar functions into exact ReLU networks.',
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    python_requires='>=3.8',
)
