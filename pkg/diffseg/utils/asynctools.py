#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright 2026 The diffseg Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#

from threading import Thread, Semaphore


class multitasking():
    """
    Non-blocking methods using decorators, backed by named thread pools.

    A pool with fewer than 2 threads runs every task inline. Task results
    are collected by the caller (e.g. into a dict keyed by identifier) and
    ordered afterwards, so the outcome never depends on scheduling.
    """

    __TASKS__ = {}
    __POOLS__ = {}
    __POOL_NAME__ = "main"

    @classmethod
    def getPool(cls, name=None):
        name = name or cls.__POOL_NAME__
        return {
            "engine": "thread",
            "name": name,
            "threads": cls.__POOLS__[name]["threads"]
        }

    @classmethod
    def createPool(cls, name="main", threads=None):

        try:
            threads = int(threads)
        except Exception as e:
            threads = 0

        # 1 thread is no threads
        if threads < 2:
            threads = 0

        cls.__POOLS__[name] = {
            "pool": Semaphore(threads) if threads > 0 else None,
            "name": name,
            "threads": threads
        }
        cls.__TASKS__.setdefault(name, [])
        return cls.getPool(name)

    @classmethod
    def task(cls, callee, pool=None):

        def async_method(*args, **kwargs):
            name = pool or cls.__POOL_NAME__
            if name not in cls.__POOLS__:
                cls.createPool(name)

            # no threads
            if cls.__POOLS__[name]['threads'] == 0:
                return callee(*args, **kwargs)

            def _run_via_pool():
                with cls.__POOLS__[name]['pool']:
                    return callee(*args, **kwargs)

            task = Thread(target=_run_via_pool, daemon=False)
            cls.__TASKS__[name].append(task)
            task.start()
            return task

        return async_method

    @classmethod
    def wait_for_tasks(cls, name=None):
        name = name or cls.__POOL_NAME__
        tasks = cls.__TASKS__.get(name, [])
        for t in tasks:
            t.join()
        cls.__TASKS__[name] = []
        return True
