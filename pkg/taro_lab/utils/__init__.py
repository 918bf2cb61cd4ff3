"""
Utility functions for taro-lab
"""
from taro_lab.utils.parallel import ordered_map
from taro_lab.utils.seeding import generator_state, restore_generator, stream

__all__ = ["ordered_map", "generator_state", "restore_generator", "stream"]
