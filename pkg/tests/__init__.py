"""Test suite for markovsa"""
