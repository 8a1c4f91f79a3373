"""Test suite for Backgrid"""
