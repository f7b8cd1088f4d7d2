from setuptools import setup

setup(name='reltrack',
      version='0.1',
      description='Relative train track maps, laminations, currents and trees',
      url='http://github.com/bendavidsteel/reltrack',
      author='Ben Steel',
      author_email='bendavidsteel@gmail.com',
      license='MIT',
      packages=['reltrack'],
      package_data={'reltrack': ['data/*.tt']},
      install_requires=['numpy', 'polars', 'networkx', 'tqdm'],
      entry_points={'console_scripts': ['reltrack=reltrack.cli:main']},
      zip_safe=False)
