# Copyright 2026 The diffseg Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


class DiffsegError(Exception):
    pass


class ConfigurationError(DiffsegError):
    """ invalid configuration; `key` names the offending setting when known """

    def __init__(self, message, key=None):
        if key is not None and key not in message:
            message = "%s: %s" % (key, message)
        super().__init__(message)
        self.key = key


class ShapeError(DiffsegError, ValueError):
    pass


class DataError(DiffsegError):
    """ unreadable, unmatched or invalid dataset files (listed in `rejected`) """

    def __init__(self, message, rejected=None):
        super().__init__(message)
        self.rejected = list(rejected or [])


class TrainingDivergedError(DiffsegError):

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics
