//! The two worked-example traces: an eight-process injection fan-out
//! (Tinba-shaped) and an eleven-process dropper chain with a two-process
//! cycle (Natas-shaped).

use crate::builder::TraceBuilder;

/// Eight processes, ten waves. The initial process unpacks once, injects
/// into a launched winver.exe, which unpacks and injects into explorer.exe,
/// which injects into five system processes.
///
/// Expected metrics: process-depth 4, wave-depth 6, width 5, 8 processes,
/// 10 waves; seven injection pairs.
pub fn tinba_trace() -> String {
    let mut b = TraceBuilder::new();
    let p0 = 100; // malware.exe, 2 waves
    let p1 = 101; // winver.exe, 2 waves
    let p2 = 102; // explorer.exe
    let fan = [
        (103, "dwm.exe"),
        (104, "taskhost.exe"),
        (105, "cmd.exe"),
        (106, "conhost.exe"),
        (107, "dllhost.exe"),
    ];

    b.process_start(p0, "malware.exe", "C:\\Users\\user\\malware.exe", None);
    b.wave_entry(p0, 0, None);
    b.wave_entry(p0, 1, Some((p0, 0)));

    // P0 wave 1 launches winver.exe and injects (signature 2).
    b.process_start(p1, "winver.exe", "C:\\Windows\\System32\\winver.exe", Some(p0));
    b.wave_entry(p1, 0, None);
    for api in [
        "CreateProcessW",
        "VirtualAllocEx",
        "WriteProcessMemory",
        "SetThreadContext",
        "ResumeThread",
    ] {
        b.api_call(p0, 1, api, true, Some(p1));
    }
    b.cross((p0, 1), (p1, 0));
    b.wave_entry(p1, 1, Some((p1, 0)));

    // P1 wave 1 injects into the running explorer.exe (signature 1).
    b.process_start(p2, "explorer.exe", "C:\\Windows\\explorer.exe", None);
    b.wave_entry(p2, 0, None);
    for api in [
        "OpenProcess",
        "VirtualAllocEx",
        "WriteProcessMemory",
        "CreateRemoteThread",
    ] {
        b.api_call(p1, 1, api, true, Some(p2));
    }
    b.cross((p1, 1), (p2, 0));

    // Explorer injects into five other processes (signature 1 each).
    for (pid, name) in fan {
        b.process_start(pid, name, &format!("C:\\Windows\\System32\\{name}"), None);
        b.wave_entry(pid, 0, None);
        for api in [
            "OpenProcess",
            "VirtualAllocEx",
            "WriteProcessMemory",
            "CreateRemoteThread",
        ] {
            b.api_call(p2, 0, api, true, Some(pid));
        }
        b.cross((p2, 0), (pid, 0));
    }

    b.instruction_summary(p0, 0, 900);
    b.instruction_summary(p0, 1, 700);
    b.instruction_summary(p1, 0, 400);
    b.instruction_summary(p1, 1, 350);
    b.instruction_summary(p2, 0, 300);
    for (pid, _) in fan {
        b.instruction_summary(pid, 0, 120);
    }
    b.build()
}

/// Eleven processes, twelve waves, twelve injection pairs. The first three
/// hops run through files dropped on disk; deeper in the chain one process
/// injects into everything it can reach, two processes inject into the same
/// cmd.exe, and explorer.exe re-injects its injector forming a 2-cycle.
///
/// Expected: process_count 11, process_depth 5.
pub fn natas_trace() -> String {
    let mut b = TraceBuilder::new();
    let sample0 = 0x318;
    let sample1 = 0x2f8;
    let ulowu0 = 0x2f0; // 2 waves
    let cmd0 = 0x6cc;
    let ulowu1 = 0x150;
    let explorer = 0x43c;
    let conhost0 = 0x76c;
    let cmd1 = 0x73c;
    let dwm = 0x458;
    let conhost1 = 0x14c;
    let taskhost = 0x50c;

    let sig8 = ["CreateFileA", "WriteFile", "CreateProcessA"];
    let sig3 = ["CreateProcessW", "VirtualAllocEx", "ZwWriteVirtualMemory", "ZwResumeThread"];
    let sig1 = ["OpenProcess", "VirtualAllocEx", "WriteProcessMemory", "CreateRemoteThread"];

    b.process_start(sample0, "sample.exe", "C:\\Users\\user\\sample.exe", None);
    b.wave_entry(sample0, 0, None);

    // Dropped copy of itself.
    let copy_path = "C:\\Users\\user\\AppData\\Local\\Temp\\sample.exe";
    b.file_create(sample0, 0, copy_path);
    b.process_start(sample1, "sample.exe", copy_path, Some(sample0));
    b.wave_entry(sample1, 0, None);
    for api in sig8 {
        b.api_call(sample0, 0, api, true, Some(sample1));
    }
    b.cross((sample0, 0), (sample1, 0));

    // The copy injects into a cmd.exe it launches.
    b.process_start(cmd0, "cmd.exe", "C:\\Windows\\System32\\cmd.exe", Some(sample1));
    b.wave_entry(cmd0, 0, None);
    for api in sig3 {
        b.api_call(sample1, 0, api, true, Some(cmd0));
    }
    b.cross((sample1, 0), (cmd0, 0));

    // Dropped ulowu.exe, which unpacks a second wave.
    let ulowu_path0 = "C:\\Users\\user\\AppData\\Roaming\\ulowu.exe";
    b.file_create(sample1, 0, ulowu_path0);
    b.process_start(ulowu0, "ulowu.exe", ulowu_path0, Some(sample1));
    b.wave_entry(ulowu0, 0, None);
    for api in sig8 {
        b.api_call(sample1, 0, api, true, Some(ulowu0));
    }
    b.cross((sample1, 0), (ulowu0, 0));
    b.wave_entry(ulowu0, 1, Some((ulowu0, 0)));

    // Second dropped ulowu.exe instance.
    let ulowu_path1 = "C:\\Users\\user\\AppData\\Roaming\\uw\\ulowu.exe";
    b.file_create(ulowu0, 1, ulowu_path1);
    b.process_start(ulowu1, "ulowu.exe", ulowu_path1, Some(ulowu0));
    b.wave_entry(ulowu1, 0, None);
    for api in sig8 {
        b.api_call(ulowu0, 1, api, true, Some(ulowu1));
    }
    b.cross((ulowu0, 1), (ulowu1, 0));

    // ulowu#2 injects into explorer.exe, which injects straight back.
    b.process_start(explorer, "explorer.exe", "C:\\Windows\\explorer.exe", None);
    b.wave_entry(explorer, 0, None);
    for api in sig1 {
        b.api_call(ulowu1, 0, api, true, Some(explorer));
    }
    b.cross((ulowu1, 0), (explorer, 0));
    for api in sig1 {
        b.api_call(explorer, 0, api, true, Some(ulowu1));
    }
    b.cross((explorer, 0), (ulowu1, 0));

    // ulowu#2 sprays the rest of the system, including the cmd.exe already
    // hit by the sample copy.
    for (pid, name, path) in [
        (dwm, "dwm.exe", "C:\\Windows\\System32\\dwm.exe"),
        (taskhost, "taskhost.exe", "C:\\Windows\\System32\\taskhost.exe"),
        (conhost1, "conhost.exe", "C:\\Windows\\System32\\conhost.exe"),
        (cmd1, "cmd.exe", "C:\\Windows\\System32\\cmd.exe"),
        (conhost0, "conhost.exe", "C:\\Windows\\System32\\conhost.exe"),
    ] {
        b.process_start(pid, name, path, None);
        b.wave_entry(pid, 0, None);
        for api in sig1 {
            b.api_call(ulowu1, 0, api, true, Some(pid));
        }
        b.cross((ulowu1, 0), (pid, 0));
    }
    for api in sig1 {
        b.api_call(ulowu1, 0, api, true, Some(cmd0));
    }
    b.cross((ulowu1, 0), (cmd0, 0));

    for (pid, waves) in [
        (sample0, 1),
        (sample1, 1),
        (ulowu0, 2),
        (cmd0, 1),
        (ulowu1, 1),
        (explorer, 1),
        (conhost0, 1),
        (cmd1, 1),
        (dwm, 1),
        (conhost1, 1),
        (taskhost, 1),
    ] {
        for wave in 0..waves {
            b.instruction_summary(pid, wave, 400);
        }
    }
    b.build()
}
