#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import sys

from DISTAIN.CommandLine import main


sys.exit(main())
