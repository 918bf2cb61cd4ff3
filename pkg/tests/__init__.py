"""
Test suite for taro-lab
"""
