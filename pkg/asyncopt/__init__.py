"""Asynchronous optimization under totally asynchronous delays"""
